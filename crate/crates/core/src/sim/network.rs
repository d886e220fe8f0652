//! Seeded message delivery between simulated nodes.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::consensus::NodeId;

use super::scenario::{NetworkSpec, PartitionSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DropRecord {
    pub round: u64,
    pub src: NodeId,
    pub dst: NodeId,
}

/// Latency and partition model. Each link has a fixed base latency; each
/// message adds uniform jitter on top.
#[derive(Clone, Debug)]
pub struct NetworkModel {
    base: Vec<Vec<f64>>,
    jitter_s: f64,
    interval_s: f64,
    partitions: Vec<PartitionSpec>,
    rng: ChaCha20Rng,
    drops: Vec<DropRecord>,
}

impl NetworkModel {
    pub fn new<R: Rng>(spec: &NetworkSpec, nodes: usize, interval_s: u64, rng: &mut R) -> Self {
        let mut base = vec![vec![0.0; nodes]; nodes];
        for (i, row) in base.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                if i != j {
                    *cell = rng.gen_range(spec.latency_min_s..=spec.latency_max_s);
                }
            }
        }
        NetworkModel {
            base,
            jitter_s: spec.jitter_s,
            interval_s: interval_s as f64,
            partitions: spec.partitions.clone(),
            rng: ChaCha20Rng::from_rng(rng).expect("chacha seeding is infallible"),
            drops: Vec::new(),
        }
    }

    /// Every message arrives in the round it was sent.
    pub fn zero_latency(nodes: usize, interval_s: u64) -> Self {
        NetworkModel {
            base: vec![vec![0.0; nodes]; nodes],
            jitter_s: 0.0,
            interval_s: interval_s as f64,
            partitions: Vec::new(),
            rng: ChaCha20Rng::seed_from_u64(0),
            drops: Vec::new(),
        }
    }

    pub fn with_partitions(mut self, partitions: Vec<PartitionSpec>) -> Self {
        self.partitions = partitions;
        self
    }

    pub fn set_link_latency(&mut self, src: NodeId, dst: NodeId, seconds: f64) {
        self.base[src as usize][dst as usize] = seconds;
    }

    pub fn node_count(&self) -> usize {
        self.base.len()
    }

    /// Mean one-way latency from `src` to `dst`, in seconds.
    pub fn link_latency(&self, src: NodeId, dst: NodeId) -> f64 {
        self.base[src as usize][dst as usize] + self.jitter_s / 2.0
    }

    pub fn reachable(&self, src: NodeId, dst: NodeId, round: u64) -> bool {
        self.partitions
            .iter()
            .filter(|p| p.active(round))
            .all(|p| p.group_of(src) == p.group_of(dst))
    }

    /// Whether some partition lifts at the start of `round`.
    pub fn heals_at(&self, round: u64) -> bool {
        self.partitions.iter().any(|p| p.end_round == round)
    }

    /// Delivery round for a message sent in `round`, or `None` (and a drop
    /// record) if the pair is partitioned.
    pub fn deliver(&mut self, src: NodeId, dst: NodeId, round: u64) -> Option<u64> {
        if !self.reachable(src, dst, round) {
            self.drops.push(DropRecord { round, src, dst });
            return None;
        }
        let jitter = if self.jitter_s > 0.0 {
            self.rng.gen_range(0.0..self.jitter_s)
        } else {
            0.0
        };
        let latency = self.base[src as usize][dst as usize] + jitter;
        Some(round + (latency / self.interval_s).floor() as u64)
    }

    pub fn drops(&self) -> &[DropRecord] {
        &self.drops
    }
}

#[derive(Clone, Debug)]
pub struct Envelope<M> {
    pub src: NodeId,
    pub dst: NodeId,
    pub sent_round: u64,
    pub msg: M,
}

/// Messages in flight, released in (delivery round, send order).
#[derive(Clone, Debug)]
pub struct Network<M> {
    pub model: NetworkModel,
    queue: BTreeMap<(u64, u64), Envelope<M>>,
    seq: u64,
}

impl<M> Network<M> {
    pub fn new(model: NetworkModel) -> Self {
        Network {
            model,
            queue: BTreeMap::new(),
            seq: 0,
        }
    }

    /// Queues `msg`; false if the model dropped it.
    pub fn send(&mut self, src: NodeId, dst: NodeId, round: u64, msg: M) -> bool {
        let Some(due) = self.model.deliver(src, dst, round) else {
            return false;
        };
        self.queue.insert(
            (due, self.seq),
            Envelope {
                src,
                dst,
                sent_round: round,
                msg,
            },
        );
        self.seq += 1;
        true
    }

    /// Next message due at or before `round`.
    pub fn next_due(&mut self, round: u64) -> Option<Envelope<M>> {
        let (&key, _) = self.queue.first_key_value()?;
        if key.0 > round {
            return None;
        }
        self.queue.remove(&key)
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }
}
