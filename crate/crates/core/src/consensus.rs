//! Delay-based committee election and round-robin block production.
//!
//! Every node scores each candidate by how quickly it can process a block,
//! turns the scores into voting probabilities, and spends its vote budget
//! (last epoch's incentive) accordingly. The top `M_c` vote recipients form
//! the committee and take producer slots in turn.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

pub type NodeId = u32;

/// Block finalization delay in seconds.
pub const DEFAULT_TAU_FINAL_S: f64 = 3.0;

/// Votes drawn per voter in sampled mode; each carries `budget / tickets`.
pub const SAMPLED_TICKETS: usize = 16;

/// One observer's view of one candidate's block-processing delay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelayObservation {
    pub observer: NodeId,
    pub candidate: NodeId,
    /// Transaction propagation from observer to candidate.
    pub tau_tx: f64,
    /// Hashing, signature and incentive computation at the candidate.
    pub tau_compute: f64,
    pub tau_final: f64,
}

impl DelayObservation {
    pub fn total(&self) -> f64 {
        total_delay(self)
    }
}

pub fn total_delay(obs: &DelayObservation) -> f64 {
    obs.tau_tx + obs.tau_compute + obs.tau_final
}

/// `ln(1 + max(theta - tau, 0))`. Negative inputs are clamped to zero.
pub fn utility(tau: f64, theta: f64) -> f64 {
    let clamp = |name: &str, v: f64| {
        if v < 0.0 || v.is_nan() {
            log::warn!("negative {name} {v} clamped to 0");
            0.0
        } else {
            v
        }
    };
    let (tau, theta) = (clamp("delay", tau), clamp("threshold", theta));
    (theta - tau).max(0.0).ln_1p()
}

/// Normalizes utilities into probabilities; uniform when all are zero.
pub fn vote_probabilities(utilities: &BTreeMap<NodeId, f64>) -> BTreeMap<NodeId, f64> {
    let total: f64 = utilities.values().sum();
    if total > 0.0 {
        utilities.iter().map(|(&m, &u)| (m, u / total)).collect()
    } else {
        let p = 1.0 / utilities.len() as f64;
        utilities.keys().map(|&m| (m, p)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommitteeConfig {
    /// Maximum acceptable block-processing delay, seconds.
    pub theta: f64,
    /// Committee size M_c.
    pub size: usize,
    pub vote_budget: BTreeMap<NodeId, f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum VoteMode {
    /// Each voter splits its budget in proportion to the probabilities.
    #[default]
    Expected,
    /// Each voter draws [`SAMPLED_TICKETS`] candidates from the probabilities.
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Committee {
    pub members: Vec<NodeId>,
}

impl Committee {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.members.contains(&node)
    }

    /// Producer for a slot: `members[slot mod M_c]`.
    pub fn producer_at(&self, slot: u64) -> Option<NodeId> {
        scheduled_producer(self, slot)
    }
}

pub fn scheduled_producer(committee: &Committee, slot: u64) -> Option<NodeId> {
    if committee.members.is_empty() {
        return None;
    }
    Some(committee.members[(slot % committee.members.len() as u64) as usize])
}

#[derive(Clone, Debug, PartialEq)]
pub struct Election {
    pub committee: Committee,
    /// Votes received by every candidate.
    pub votes: BTreeMap<NodeId, f64>,
}

impl Election {
    /// `epoch,node,votes,elected` rows, one per candidate.
    pub fn csv_rows(&self, epoch: u64) -> Vec<String> {
        self.votes
            .iter()
            .map(|(node, v)| format!("{epoch},{node},{v},{}", self.committee.contains(*node)))
            .collect()
    }
}

/// Runs one election over the given observations.
pub fn elect<R: Rng + ?Sized>(
    observations: &[DelayObservation],
    config: &CommitteeConfig,
    mode: VoteMode,
    rng: &mut R,
) -> Election {
    let candidates: BTreeSet<NodeId> = observations.iter().map(|o| o.candidate).collect();
    let mut votes: BTreeMap<NodeId, f64> = candidates.iter().map(|&c| (c, 0.0)).collect();

    let mut by_observer: BTreeMap<NodeId, BTreeMap<NodeId, f64>> = BTreeMap::new();
    for obs in observations {
        by_observer
            .entry(obs.observer)
            .or_default()
            .insert(obs.candidate, utility(obs.total(), config.theta));
    }

    for (observer, utilities) in &by_observer {
        let budget = config.vote_budget.get(observer).copied().unwrap_or(0.0);
        if budget <= 0.0 || !budget.is_finite() {
            continue;
        }
        let probs = vote_probabilities(utilities);
        match mode {
            VoteMode::Expected => {
                for (m, p) in &probs {
                    *votes.get_mut(m).unwrap() += budget * p;
                }
            }
            VoteMode::Sampled => {
                let ids: Vec<NodeId> = probs.keys().copied().collect();
                let Ok(dist) = WeightedIndex::new(probs.values()) else {
                    continue;
                };
                let ticket = budget / SAMPLED_TICKETS as f64;
                for _ in 0..SAMPLED_TICKETS {
                    *votes.get_mut(&ids[dist.sample(rng)]).unwrap() += ticket;
                }
            }
        }
    }

    if candidates.len() < config.size {
        log::warn!(
            "only {} candidates for a committee of {}; electing all",
            candidates.len(),
            config.size
        );
    }
    let mut ranked: Vec<(NodeId, f64)> = votes.iter().map(|(&m, &v)| (m, v)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let members = ranked.iter().take(config.size).map(|(m, _)| *m).collect();
    Election {
        committee: Committee { members },
        votes,
    }
}
