//! Deterministic round-based simulation: witnesses and provers exchange
//! proofs over a modelled radio link, every node keeps its own chain and
//! mempool, and witnesses move under the potential field.
//!
//! One round is one block interval. Within a round: partitions that lift
//! announce tips, provers collect endorsements and submit commitments, the
//! scheduled producer seals a block, witnesses move and report. Messages
//! whose latency stays under the interval arrive in the same round.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::consensus::NodeId;
use crate::crypto::{derive_keypair, hash_parts, Hash32, KeyEscrow, KeyPair, DEFAULT_ESCROW_POOL};
use crate::field::{self, estimate_coverage, FieldParams, Region, Vec2, WitnessState};
use crate::ledger::{
    AppendOutcome, Block, ChainConfig, ChainStore, ConsensusRules, Mempool, Operation, Transaction,
    MAX_BLOCK_BYTES,
};
use crate::pol::{
    build_pol_request, combine_responses, finalize_note, witness_validate, CollectedResponse,
    LocalFrame, Location, PoLCommitment, PoLNote, WitnessPolicy, WitnessSigner,
};

pub mod adversary;
pub mod network;
pub mod report;
pub mod rules;
pub mod scenario;

pub use adversary::{AdversaryAction, AttackOutcome, AttackTally, Verdict};
pub use network::{DropRecord, Envelope, Network, NetworkModel};
pub use report::{
    bundle_digest, csv_header, run, tallies_csv, AllocationRow, RoundRow, RunReport, VerificationRow,
    BUNDLE_FILES,
};
pub use rules::{delay_observations, SimRules};
pub use scenario::{Scenario, ScenarioError, SCHEMA_VERSION};

/// Horizontal scanlines used for the per-round coverage estimate.
pub const COVERAGE_RESOLUTION: usize = 400;

#[derive(Clone, Debug)]
pub(crate) enum Message {
    Tx(Transaction),
    Block(Block),
    GetBlock(Hash32),
}

#[derive(Debug)]
pub(crate) struct Node {
    pub(crate) keys: KeyPair,
    pub(crate) store: ChainStore,
    pub(crate) pool: Mempool,
    /// Blocks waiting for their parent, keyed by the missing parent.
    orphans: HashMap<Hash32, Vec<Block>>,
}

#[derive(Debug)]
pub(crate) struct Prover {
    pub(crate) node: NodeId,
    pub(crate) escrow: KeyEscrow,
    path: Vec<Vec2>,
    pub(crate) notes: Vec<PoLNote>,
}

/// Counters accumulated over a run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunStats {
    pub proofs_attempted: u64,
    pub commitments_built: u64,
    pub no_witness: u64,
    pub responses: u64,
    pub witness_rejections: u64,
    pub blocks_produced: u64,
    pub blocks_rejected: u64,
    pub reorgs: u64,
    pub txs_rejected: u64,
}

fn stream(seed: u64, label: &[u8]) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(hash_parts(&[b"bychain/sim", &seed.to_be_bytes(), label]).0)
}

/// Initial witness field states: explicit positions, or a seeded uniform
/// draw from the square patch centred in the region.
pub fn deploy_witnesses(scenario: &Scenario) -> Vec<WitnessState> {
    let w = &scenario.witnesses;
    let center = scenario.region().center();
    let mut rng = stream(scenario.seed, b"deploy");
    (0..w.count)
        .map(|i| {
            let position = match &w.positions {
                Some(p) => Vec2::new(p[i][0], p[i][1]),
                None => {
                    let h = w.patch_m / 2.0;
                    let jitter = |rng: &mut ChaCha20Rng| if h > 0.0 { rng.gen_range(-h..h) } else { 0.0 };
                    center + Vec2::new(jitter(&mut rng), jitter(&mut rng))
                }
            };
            WitnessState::at_rest(i as u32, position, w.mass, w.radius_m)
        })
        .collect()
}

fn prover_paths(scenario: &Scenario) -> Vec<Vec<Vec2>> {
    let p = &scenario.provers;
    if let Some(paths) = &p.paths {
        return paths
            .iter()
            .map(|path| path.iter().map(|w| Vec2::new(w[0], w[1])).collect())
            .collect();
    }
    let center = scenario.region().center();
    let mut rng = stream(scenario.seed, b"paths");
    let r = p.roam_m;
    (0..p.count)
        .map(|_| {
            (0..p.waypoints)
                .map(|_| {
                    let d = if r > 0.0 {
                        Vec2::new(rng.gen_range(-r..r), rng.gen_range(-r..r))
                    } else {
                        Vec2::zeros()
                    };
                    scenario.region().clamp(&(center + d))
                })
                .collect()
        })
        .collect()
}

/// Position after travelling `distance` along a closed waypoint loop.
fn along_loop(path: &[Vec2], distance: f64) -> Vec2 {
    let legs: Vec<(Vec2, Vec2)> = (0..path.len())
        .map(|i| (path[i], path[(i + 1) % path.len()]))
        .collect();
    let perimeter: f64 = legs.iter().map(|(a, b)| (b - a).norm()).sum();
    if perimeter == 0.0 {
        return path[0];
    }
    let mut left = distance.rem_euclid(perimeter);
    for (a, b) in legs {
        let len = (b - a).norm();
        if left <= len && len > 0.0 {
            return a + (b - a) * (left / len);
        }
        left -= len;
    }
    path[0]
}

pub struct Simulation {
    pub(crate) scenario: Scenario,
    pub(crate) round: u64,
    pub(crate) config: ChainConfig,
    pub(crate) rules: SimRules,
    pub(crate) nodes: Vec<Node>,
    pub(crate) net: Network<Message>,
    pub(crate) states: Vec<WitnessState>,
    pub(crate) signers: Vec<WitnessSigner>,
    pub(crate) provers: Vec<Prover>,
    pub(crate) params: FieldParams,
    pub(crate) region: Region,
    pub(crate) frame: LocalFrame,
    pub(crate) policy: WitnessPolicy,
    pub(crate) rng: ChaCha20Rng,
    pub(crate) attack_rng: ChaCha20Rng,
    pub(crate) adversary_keys: KeyPair,
    pub(crate) adversary_escrow: KeyEscrow,
    pub(crate) coverage: Vec<f64>,
    pub(crate) rows: Vec<RoundRow>,
    pub(crate) attacks: Vec<AttackOutcome>,
    pub(crate) stats: RunStats,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation")
            .field("round", &self.round)
            .field("nodes", &self.nodes.len())
            .field("stats", &self.stats)
            .finish_non_exhaustive()
    }
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let seed = scenario.seed;
        let master = hash_parts(&[b"bychain/sim/keys", &seed.to_be_bytes()]).0;
        let n = scenario.node_count();
        let keys: Vec<KeyPair> = (0..n)
            .map(|i| derive_keypair(&master, b"sim/node", i as u64))
            .collect();

        let config = ChainConfig {
            block_interval_s: scenario.consensus.block_interval_s,
            tx_lifetime_blocks: scenario.consensus.tx_lifetime_blocks,
            max_block_bytes: MAX_BLOCK_BYTES,
            finality_depth: scenario.consensus.committee_size as u64,
            ..ChainConfig::default()
        };

        let mut net_rng = stream(seed, b"network");
        let model = NetworkModel::new(&scenario.network, n, config.block_interval_s, &mut net_rng);
        let spread = scenario.consensus.compute_spread;
        let mut speed_rng = stream(seed, b"compute");
        let speed: Vec<f64> = (0..n)
            .map(|_| if spread > 0.0 { speed_rng.gen_range(1.0 - spread..1.0 + spread) } else { 1.0 })
            .collect();
        let observations = delay_observations(&scenario.consensus, &model, &speed, scenario.witnesses.count);
        let rules = SimRules::new(
            keys.iter().map(|k| k.public).collect(),
            observations,
            scenario.consensus.theta_s,
            scenario.consensus.committee_size,
            scenario.consensus.vote_mode.into(),
            field::EpochBudget::new(scenario.incentive.budget, scenario.incentive.epoch_blocks),
            seed,
            scenario.consensus.pinned_committee.clone(),
        );

        let states = deploy_witnesses(&scenario);
        let signers = (0..scenario.witnesses.count)
            .map(|i| WitnessSigner::new(keys[i].clone()))
            .collect();
        let proofs_per_prover = (scenario.rounds / scenario.provers.proof_interval_rounds + 1) as usize;
        let pool = proofs_per_prover.max(DEFAULT_ESCROW_POOL);
        let provers = prover_paths(&scenario)
            .into_iter()
            .enumerate()
            .map(|(p, path)| {
                let escrow_seed = hash_parts(&[&master, b"sim/escrow", &(p as u64).to_be_bytes()]).0;
                Prover {
                    node: scenario.prover_node(p),
                    escrow: KeyEscrow::with_pool_size(escrow_seed, pool),
                    path,
                    notes: Vec::new(),
                }
            })
            .collect();
        let nodes = keys
            .iter()
            .map(|k| Node {
                keys: k.clone(),
                store: ChainStore::new(config.clone()),
                pool: Mempool::new(),
                orphans: HashMap::new(),
            })
            .collect();

        let mut sim = Simulation {
            round: 0,
            config,
            rules,
            nodes,
            net: Network::new(model),
            states,
            signers,
            provers,
            params: scenario.field_params(),
            region: scenario.region(),
            frame: scenario.frame(),
            policy: WitnessPolicy::new(scenario.witnesses.radius_m),
            rng: stream(seed, b"protocol"),
            attack_rng: stream(seed, b"adversary"),
            adversary_keys: derive_keypair(&master, b"sim/adversary", 0),
            adversary_escrow: KeyEscrow::with_pool_size(
                hash_parts(&[&master, b"sim/adversary-escrow"]).0,
                DEFAULT_ESCROW_POOL,
            ),
            coverage: Vec::new(),
            rows: Vec::new(),
            attacks: Vec::new(),
            stats: RunStats::default(),
            scenario,
        };
        let forces = field::net_forces(&sim.states, &sim.params);
        for (s, f) in sim.states.iter_mut().zip(forces) {
            s.net_force = f;
        }
        sim.record_field(0);
        Ok(sim)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Last completed round; 0 before the first step.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn is_finished(&self) -> bool {
        self.round >= self.scenario.rounds
    }

    pub fn rules(&self) -> &SimRules {
        &self.rules
    }

    pub fn chain_config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn store(&self, node: NodeId) -> &ChainStore {
        &self.nodes[node as usize].store
    }

    pub fn tips(&self) -> Vec<Hash32> {
        self.nodes.iter().map(|n| n.store.tip()).collect()
    }

    pub fn witness_states(&self) -> &[WitnessState] {
        &self.states
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    pub fn notes(&self, prover: usize) -> &[PoLNote] {
        &self.provers[prover].notes
    }

    pub fn drops(&self) -> &[DropRecord] {
        self.net.model.drops()
    }

    pub fn attacks(&self) -> &[AttackOutcome] {
        &self.attacks
    }

    pub fn timestamp(&self, round: u64) -> u64 {
        self.config.slot_timestamp(round)
    }

    pub fn prover_position(&self, prover: usize, round: u64) -> Vec2 {
        let speed = self.scenario.provers.speed_m_per_round;
        along_loop(&self.provers[prover].path, speed * round as f64)
    }

    pub(crate) fn location_of(&self, p: &Vec2) -> Location {
        self.frame
            .to_location(p.x - self.region.min.x, p.y - self.region.min.y)
            .expect("region positions map to valid coordinates")
    }

    /// Runs every remaining round, then stage 2 verification.
    pub fn run(mut self) -> RunReport {
        while !self.is_finished() {
            self.step();
        }
        self.finish()
    }

    /// Executes one round.
    pub fn step(&mut self) {
        let r = self.round + 1;
        self.round = r;
        if self.net.model.heals_at(r) {
            self.announce_tips(r);
        }
        self.flush(r);

        let p = &self.scenario.provers;
        let (interval, quiet) = (p.proof_interval_rounds, p.quiet_tail_rounds);
        if r + quiet <= self.scenario.rounds {
            for i in 0..self.provers.len() {
                if r % interval == i as u64 % interval {
                    self.prove(i, r);
                }
            }
        }
        self.flush(r);

        self.produce(r);
        self.flush(r);

        self.move_witnesses(r);
        self.flush(r);

        let scripted: Vec<AdversaryAction> = self
            .scenario
            .adversary
            .iter()
            .filter(|a| a.round == r)
            .map(|a| a.action.clone())
            .collect();
        for action in scripted {
            let outcome = self.inject(&action);
            self.attacks.push(outcome);
        }
    }

    fn announce_tips(&mut self, r: u64) {
        let n = self.nodes.len() as NodeId;
        for src in 0..n {
            let tip = self.nodes[src as usize].store.tip_block().clone();
            for dst in (0..n).filter(|&d| d != src) {
                self.net.send(src, dst, r, Message::Block(tip.clone()));
            }
        }
    }

    fn flush(&mut self, r: u64) {
        while let Some(env) = self.net.next_due(r) {
            self.handle(env, r);
        }
    }

    fn handle(&mut self, env: Envelope<Message>, r: u64) {
        let dst = env.dst as usize;
        match env.msg {
            Message::Tx(tx) => {
                let node = &mut self.nodes[dst];
                if node.pool.submit(&node.store, tx).is_err() {
                    self.stats.txs_rejected += 1;
                }
            }
            Message::Block(block) => self.receive_block(env.dst, block, env.src, r),
            Message::GetBlock(hash) => {
                if let Some(block) = self.nodes[dst].store.block(&hash) {
                    let block = block.clone();
                    self.net.send(env.dst, env.src, r, Message::Block(block));
                }
            }
        }
    }

    fn receive_block(&mut self, at: NodeId, block: Block, from: NodeId, r: u64) {
        let now = self.config.slot_timestamp(r);
        let node = &mut self.nodes[at as usize];
        if node.store.contains(&block.hash()) {
            return;
        }
        let parent = block.header.prev_hash;
        if !node.store.contains(&parent) {
            let waiting = node.orphans.entry(parent).or_default();
            let first_request = waiting.is_empty();
            waiting.push(block);
            if first_request {
                self.net.send(at, from, r, Message::GetBlock(parent));
            }
            return;
        }
        let mut queue = vec![block];
        while let Some(b) = queue.pop() {
            let hash = b.hash();
            match node.store.append(b, &self.rules, now) {
                Ok(outcome) => {
                    if let AppendOutcome::Reorg { orphaned, .. } = outcome {
                        self.stats.reorgs += 1;
                        node.pool.readmit(&node.store, orphaned);
                    }
                    if let Some(children) = node.orphans.remove(&hash) {
                        queue.extend(children);
                    }
                }
                Err(e) => {
                    log::debug!("node {at} rejected block from {from}: {e}");
                    self.stats.blocks_rejected += 1;
                }
            }
        }
        node.pool.prune(&node.store);
    }

    /// Submits locally and gossips to every other node.
    pub(crate) fn broadcast_tx(&mut self, src: NodeId, tx: Transaction, r: u64) {
        let node = &mut self.nodes[src as usize];
        if node.pool.submit(&node.store, tx.clone()).is_err() {
            self.stats.txs_rejected += 1;
        }
        for dst in (0..self.nodes.len() as NodeId).filter(|&d| d != src) {
            self.net.send(src, dst, r, Message::Tx(tx.clone()));
        }
    }

    pub(crate) fn expiration(&self, node: NodeId) -> u64 {
        self.nodes[node as usize].store.tip_height() + self.config.tx_lifetime_blocks
    }

    /// Witnesses that hear a broadcast from `pos`, in id order.
    pub(crate) fn witnesses_in_range(&mut self, pos: &Vec2) -> Vec<usize> {
        let success = self.scenario.network.ble_success;
        let mut out = Vec::new();
        for (i, s) in self.states.iter().enumerate() {
            if (s.position - pos).norm() <= s.comm_radius && self.rng.gen_bool(success) {
                out.push(i);
            }
        }
        out
    }

    fn prove(&mut self, i: usize, r: u64) {
        self.stats.proofs_attempted += 1;
        let ts = self.timestamp(r);
        let pos = self.prover_position(i, r);
        let loc = self.location_of(&pos);
        let (advert, pending) = match build_pol_request(&mut self.provers[i].escrow, loc, ts, &mut self.rng) {
            Ok(x) => x,
            Err(e) => {
                log::warn!("prover {i} cannot build a request: {e}");
                return;
            }
        };
        let window = self.scenario.network.collection_window_ms;
        let mut collected = Vec::new();
        for w in self.witnesses_in_range(&pos) {
            let wloc = self.location_of(&self.states[w].position);
            if witness_validate(&advert, &wloc, &self.policy, ts).is_err() {
                self.stats.witness_rejections += 1;
                continue;
            }
            let response = self.signers[w]
                .respond(&advert.request)
                .expect("witness keys sign");
            self.stats.responses += 1;
            collected.push(CollectedResponse {
                response,
                arrival_ms: self.rng.gen_range(1..=window.max(1)),
            });
        }
        let commitment = match combine_responses(&advert.request, &collected, window) {
            Ok(c) => c,
            Err(_) => {
                self.stats.no_witness += 1;
                return;
            }
        };
        let prover = &mut self.provers[i];
        let one_use = prover.escrow.current().expect("key reserved by request").clone();
        let note = finalize_note(&mut prover.escrow, pending, &commitment).expect("commitment built from pending request");
        prover.notes.push(note);
        let node = prover.node;
        let tx = Transaction::new(vec![Operation::PoLCommitment(commitment)], self.expiration(node), &one_use)
            .expect("one-use key signs");
        self.stats.commitments_built += 1;
        self.broadcast_tx(node, tx, r);
    }

    fn produce(&mut self, r: u64) {
        let ts = self.timestamp(r);
        for id in 0..self.nodes.len() {
            let node = &self.nodes[id];
            let parent = node.store.tip();
            if self.rules.scheduled_producer(&node.store, &parent, r) != Some(node.keys.public) {
                continue;
            }
            let height = node.store.tip_height() + 1;
            let alloc = self.rules.allocation(&node.store, &parent, height);
            let block = node
                .pool
                .assemble_block(&node.store, &node.keys, ts, alloc)
                .expect("producer key signs");
            let node = &mut self.nodes[id];
            match node.store.append(block.clone(), &self.rules, ts) {
                Ok(_) => {
                    node.pool.prune(&node.store);
                    self.stats.blocks_produced += 1;
                    for dst in (0..self.nodes.len()).filter(|&d| d != id) {
                        self.net.send(id as NodeId, dst as NodeId, r, Message::Block(block.clone()));
                    }
                }
                Err(e) => log::warn!("node {id} produced an invalid block: {e}"),
            }
        }
    }

    fn move_witnesses(&mut self, r: u64) {
        field::advance(&mut self.states, &self.params, &self.region);
        self.record_field(r);
        let every = self.scenario.witnesses.report_interval_rounds;
        if every == 0 || !r.is_multiple_of(every) {
            return;
        }
        for w in 0..self.states.len() {
            let s = self.states[w];
            let op = Operation::WitnessReport {
                position: self.location_of(&s.position),
                net_force: [s.net_force.x, s.net_force.y],
            };
            let node = w as NodeId;
            let tx = Transaction::new(vec![op], self.expiration(node), &self.nodes[w].keys)
                .expect("witness key signs");
            self.broadcast_tx(node, tx, r);
        }
    }

    fn record_field(&mut self, r: u64) {
        let coverage = estimate_coverage(&self.states, &self.region, COVERAGE_RESOLUTION);
        self.coverage.push(coverage);
        for s in &self.states {
            self.rows.push(RoundRow {
                round: r,
                node: s.id,
                x: s.position.x,
                y: s.position.y,
                force: s.net_force.norm(),
                coverage,
            });
        }
    }

    /// On-chain commitments on the reference node's tip chain.
    pub(crate) fn chain_commitments(&self) -> Vec<PoLCommitment> {
        self.nodes[0]
            .store
            .main_blocks()
            .flat_map(|b| b.operations())
            .filter_map(|op| op.as_commitment().cloned())
            .collect()
    }
}
