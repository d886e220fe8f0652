//! Chain rules for simulated nodes: epoch-wise committee election and the
//! allocation every boundary block must carry.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::consensus::{elect, Committee, CommitteeConfig, DelayObservation, Election, NodeId, VoteMode};
use crate::crypto::{hash_parts, Address, Hash32, PublicKey};
use crate::field::{allocate_incentive, EpochBudget};
use crate::ledger::{ChainStore, ConsensusRules, IncentiveAllocation, Operation};

use super::network::NetworkModel;
use super::scenario::ConsensusSpec;

/// Modelled block-processing delay of every candidate as seen by every
/// observer. Compute time scales with the number of reporting witnesses
/// and a per-node speed factor.
pub fn delay_observations(
    spec: &ConsensusSpec,
    network: &NetworkModel,
    speed: &[f64],
    witnesses: usize,
) -> Vec<DelayObservation> {
    let n = network.node_count() as NodeId;
    let mut out = Vec::with_capacity((n * n) as usize);
    for observer in 0..n {
        for candidate in 0..n {
            let tau_ic = spec.tau_ic_s_per_witness * witnesses as f64;
            out.push(DelayObservation {
                observer,
                candidate,
                tau_tx: network.link_latency(observer, candidate),
                tau_compute: (spec.tau_hash_s + spec.tau_sig_s + tau_ic) * speed[candidate as usize],
                tau_final: spec.tau_final_s,
            });
        }
    }
    out
}

/// Consensus rules shared by every simulated node. Elections are a pure
/// function of the branch, so they are cached by epoch boundary block.
#[derive(Debug)]
pub struct SimRules {
    node_keys: Vec<PublicKey>,
    addresses: HashMap<Address, NodeId>,
    observations: Vec<DelayObservation>,
    theta: f64,
    committee_size: usize,
    mode: VoteMode,
    budget: EpochBudget,
    seed: u64,
    pinned: Option<Vec<NodeId>>,
    cache: RefCell<HashMap<Hash32, Election>>,
}

impl SimRules {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        node_keys: Vec<PublicKey>,
        observations: Vec<DelayObservation>,
        theta: f64,
        committee_size: usize,
        mode: VoteMode,
        budget: EpochBudget,
        seed: u64,
        pinned: Option<Vec<NodeId>>,
    ) -> Self {
        let addresses = node_keys
            .iter()
            .enumerate()
            .map(|(i, pk)| (pk.address(), i as NodeId))
            .collect();
        SimRules {
            node_keys,
            addresses,
            observations,
            theta,
            committee_size,
            mode,
            budget,
            seed,
            pinned,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn epoch_blocks(&self) -> u64 {
        self.budget.epoch_blocks
    }

    /// Epoch a block height belongs to; epoch `k` spans heights
    /// `kE+1 ..= (k+1)E`.
    pub fn epoch_of(&self, height: u64) -> u64 {
        height.saturating_sub(1) / self.epoch_blocks()
    }

    pub fn node_of(&self, addr: &Address) -> Option<NodeId> {
        self.addresses.get(addr).copied()
    }

    pub fn node_key(&self, node: NodeId) -> PublicKey {
        self.node_keys[node as usize]
    }

    pub fn observations(&self) -> &[DelayObservation] {
        &self.observations
    }

    /// Block whose contents fix the committee of `epoch` on the branch
    /// through `head`.
    fn boundary(&self, store: &ChainStore, head: &Hash32, epoch: u64) -> Option<Hash32> {
        if epoch == 0 {
            Some(store.genesis_hash())
        } else {
            store.ancestor(head, epoch * self.epoch_blocks())
        }
    }

    /// Vote budgets: one unit each before the first payout, then the
    /// allocation carried by the boundary block.
    fn vote_budget(&self, store: &ChainStore, boundary: &Hash32) -> BTreeMap<NodeId, f64> {
        let uniform = || (0..self.node_keys.len() as NodeId).map(|n| (n, 1.0)).collect();
        let Some(block) = store.block(boundary) else {
            return uniform();
        };
        let alloc = block.operations().find_map(|op| match op {
            Operation::IncentiveAllocation(a) => Some(a),
            _ => None,
        });
        match alloc {
            Some(a) => a
                .allocations
                .iter()
                .filter_map(|(addr, u)| Some((self.node_of(addr)?, *u)))
                .collect(),
            None => uniform(),
        }
    }

    /// Election for the epoch containing `height` on the branch through
    /// `head`, where `head` is at height `height - 1` or later.
    pub fn election(&self, store: &ChainStore, head: &Hash32, height: u64) -> Option<Election> {
        let epoch = self.epoch_of(height);
        let boundary = self.boundary(store, head, epoch)?;
        if let Some(e) = self.cache.borrow().get(&boundary) {
            return Some(e.clone());
        }
        let election = match &self.pinned {
            Some(members) => Election {
                committee: Committee {
                    members: members.clone(),
                },
                votes: members.iter().map(|&m| (m, 0.0)).collect(),
            },
            None => {
                let config = CommitteeConfig {
                    theta: self.theta,
                    size: self.committee_size,
                    vote_budget: self.vote_budget(store, &boundary),
                };
                let seed = hash_parts(&[b"bychain/sim/election", &self.seed.to_be_bytes(), boundary.as_bytes()]);
                let mut rng = ChaCha20Rng::from_seed(seed.0);
                elect(&self.observations, &config, self.mode, &mut rng)
            }
        };
        self.cache.borrow_mut().insert(boundary, election.clone());
        Some(election)
    }

    /// Payout for the epoch ending at `height`, from the last force report
    /// of each witness in that epoch on the branch ending at `parent`.
    pub fn allocation(&self, store: &ChainStore, parent: &Hash32, height: u64) -> Option<IncentiveAllocation> {
        let e = self.epoch_blocks();
        if height == 0 || !height.is_multiple_of(e) {
            return None;
        }
        let start = height - e;
        let mut latest: BTreeMap<Address, f64> = BTreeMap::new();
        for (_, block) in store.walk_back(parent).take_while(|(_, b)| b.height() > start) {
            for tx in block.transactions.iter().rev() {
                for op in tx.operations.iter().rev() {
                    if let Operation::WitnessReport { net_force, .. } = op {
                        let norm = net_force[0].hypot(net_force[1]);
                        latest.entry(tx.signer.address()).or_insert(norm);
                    }
                }
            }
        }
        if latest.is_empty() {
            return None;
        }
        let forces: Vec<f64> = latest.values().copied().collect();
        let shares = allocate_incentive(&forces, &self.budget);
        Some(IncentiveAllocation {
            epoch: height / e - 1,
            allocations: latest.into_keys().zip(shares).collect(),
        })
    }
}

impl ConsensusRules for SimRules {
    fn scheduled_producer(&self, store: &ChainStore, parent: &Hash32, slot: u64) -> Option<PublicKey> {
        let height = store.block(parent)?.height() + 1;
        let election = self.election(store, parent, height)?;
        let node = election.committee.producer_at(slot)?;
        Some(self.node_key(node))
    }

    fn required_allocation(
        &self,
        store: &ChainStore,
        parent: &Hash32,
        height: u64,
    ) -> Option<IncentiveAllocation> {
        self.allocation(store, parent, height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{derive_keypair, KeyPair};
    use crate::ledger::{ChainConfig, Mempool, Transaction};
    use crate::pol::Location;

    fn keys(n: usize) -> Vec<KeyPair> {
        (0..n).map(|i| derive_keypair(&[1; 32], b"rules", i as u64)).collect()
    }

    fn rules(keys: &[KeyPair], epoch_blocks: u64, pinned: Option<Vec<NodeId>>) -> SimRules {
        let net = NetworkModel::zero_latency(keys.len(), 3);
        let spec = ConsensusSpec::default();
        let speed: Vec<f64> = (0..keys.len()).map(|i| 1.0 + i as f64 * 0.1).collect();
        SimRules::new(
            keys.iter().map(|k| k.public).collect(),
            delay_observations(&spec, &net, &speed, keys.len()),
            spec.theta_s,
            2,
            VoteMode::Expected,
            EpochBudget::new(100.0, epoch_blocks),
            1,
            pinned,
        )
    }

    fn report(k: &KeyPair, force: f64) -> Transaction {
        let op = Operation::WitnessReport {
            position: Location::from_degrees(1.0, 1.0).unwrap(),
            net_force: [force, 0.0],
        };
        Transaction::new(vec![op], 1_000, k).unwrap()
    }

    /// Drives a chain where whoever is scheduled produces every slot.
    fn grow(store: &mut ChainStore, pool: &mut Mempool, rules: &SimRules, keys: &[KeyPair], slots: std::ops::RangeInclusive<u64>) {
        for slot in slots {
            let pk = rules.scheduled_producer(store, &store.tip(), slot).unwrap();
            let producer = keys.iter().find(|k| k.public == pk).unwrap();
            let alloc = rules.required_allocation(store, &store.tip(), store.tip_height() + 1);
            let block = pool
                .assemble_block(store, producer, store.config().slot_timestamp(slot), alloc)
                .unwrap();
            store.append(block, rules, u64::MAX).unwrap();
            pool.prune(store);
        }
    }

    #[test]
    fn fastest_nodes_elected_first_epoch() {
        let keys = keys(4);
        let rules = rules(&keys, 5, None);
        let store = ChainStore::new(ChainConfig::default());
        let e = rules.election(&store, &store.tip(), 1).unwrap();
        assert_eq!(e.committee.members, vec![0, 1]);
        assert_eq!(
            rules.scheduled_producer(&store, &store.tip(), 3),
            Some(keys[1].public)
        );
    }

    #[test]
    fn boundary_block_pays_reporters_and_reweights_votes() {
        let keys = keys(4);
        let rules = rules(&keys, 3, None);
        let mut store = ChainStore::new(ChainConfig::default());
        let mut pool = Mempool::new();
        pool.submit(&store, report(&keys[2], 0.0)).unwrap();
        pool.submit(&store, report(&keys[3], 9.0)).unwrap();
        grow(&mut store, &mut pool, &rules, &keys, 1..=3);

        let boundary = store.tip_block();
        let Some(Operation::IncentiveAllocation(a)) = boundary.operations().next() else {
            panic!("boundary block lacks allocation");
        };
        assert_eq!(a.epoch, 0);
        let paid: BTreeMap<NodeId, f64> = a
            .allocations
            .iter()
            .map(|(addr, u)| (rules.node_of(addr).unwrap(), *u))
            .collect();
        assert!(paid[&2] > 99.0 && paid[&3] < 1.0);

        let next = rules.election(&store, &store.tip(), 4).unwrap();
        assert_eq!(next.votes.values().sum::<f64>().round(), 100.0);
        assert!(next.committee.contains(0) && next.committee.contains(1));
        assert_eq!(rules.epoch_of(3), 0);
        assert_eq!(rules.epoch_of(4), 1);
    }

    #[test]
    fn allocation_only_at_boundaries_and_only_with_reports() {
        let keys = keys(3);
        let rules = rules(&keys, 2, None);
        let mut store = ChainStore::new(ChainConfig::default());
        let mut pool = Mempool::new();
        grow(&mut store, &mut pool, &rules, &keys, 1..=4);
        assert!(store.main_blocks().all(|b| b.transactions.is_empty()));
        pool.submit(&store, report(&keys[1], 2.0)).unwrap();
        grow(&mut store, &mut pool, &rules, &keys, 5..=6);
        let alloc = store.tip_block().operations().find_map(|op| match op {
            Operation::IncentiveAllocation(a) => Some(a.clone()),
            _ => None,
        });
        assert_eq!(alloc.unwrap().allocations, vec![(keys[1].public.address(), 100.0)]);
    }

    #[test]
    fn pinned_committee_overrides_election() {
        let keys = keys(4);
        let rules = rules(&keys, 3, Some(vec![3, 1]));
        let store = ChainStore::new(ChainConfig::default());
        assert_eq!(rules.scheduled_producer(&store, &store.tip(), 0), Some(keys[3].public));
        assert_eq!(rules.scheduled_producer(&store, &store.tip(), 1), Some(keys[1].public));
    }
}
