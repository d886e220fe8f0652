//! Scenario files: TOML documents that fully determine a run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{NodeId, VoteMode, DEFAULT_TAU_FINAL_S};
use crate::field::{FieldParams, Region};
use crate::pol::{LocalFrame, Location, DEFAULT_COLLECTION_WINDOW_MS};

use super::adversary::AdversaryAction;

/// Version written to, and required in, every scenario file.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(msg.into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub seed: u64,
    pub rounds: u64,
    #[serde(default)]
    pub region: RegionSpec,
    #[serde(default)]
    pub witnesses: WitnessSpec,
    #[serde(default)]
    pub provers: ProverSpec,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub consensus: ConsensusSpec,
    #[serde(default)]
    pub field: FieldSpec,
    #[serde(default)]
    pub incentive: IncentiveSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub adversary: Vec<ScriptedAttack>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionSpec {
    pub width_m: f64,
    pub height_m: f64,
    /// Geodetic position of the region's south-west corner.
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl Default for RegionSpec {
    fn default() -> Self {
        RegionSpec {
            width_m: 1000.0,
            height_m: 1000.0,
            origin_lat: 39.9612,
            origin_lon: 116.3580,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WitnessSpec {
    pub count: usize,
    /// Communication radius R in meters.
    pub radius_m: f64,
    pub mass: f64,
    /// Side of the square, centred in the region, that seeded initial
    /// positions are drawn from. Ignored when `positions` is given.
    pub patch_m: f64,
    /// Witnesses put their position and force on chain every this many
    /// rounds; 0 disables reporting.
    pub report_interval_rounds: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 2]>>,
}

impl Default for WitnessSpec {
    fn default() -> Self {
        WitnessSpec {
            count: 10,
            radius_m: 50.0,
            mass: 0.1,
            patch_m: 40.0,
            report_interval_rounds: 5,
            positions: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProverSpec {
    pub count: usize,
    /// Each prover broadcasts once every this many rounds, staggered by index.
    pub proof_interval_rounds: u64,
    pub speed_m_per_round: f64,
    /// Generated paths stay within this distance of the region centre.
    pub roam_m: f64,
    pub waypoints: usize,
    /// No new proofs start in the final rounds, so every commitment can
    /// still reach the chain.
    pub quiet_tail_rounds: u64,
    /// Closed waypoint loops in region meters, one per prover.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<Vec<Vec<[f64; 2]>>>,
}

impl Default for ProverSpec {
    fn default() -> Self {
        ProverSpec {
            count: 3,
            proof_interval_rounds: 2,
            speed_m_per_round: 4.5,
            roam_m: 60.0,
            waypoints: 6,
            quiet_tail_rounds: 3,
            paths: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    /// Per-link base latency is drawn once, uniformly from this range.
    pub latency_min_s: f64,
    pub latency_max_s: f64,
    /// Per-message jitter, uniform in `[0, jitter_s]`.
    pub jitter_s: f64,
    /// Chance that a witness in range hears a given advertisement.
    pub ble_success: f64,
    pub collection_window_ms: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub partitions: Vec<PartitionSpec>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            latency_min_s: 0.05,
            latency_max_s: 1.5,
            jitter_s: 0.2,
            ble_success: 1.0,
            collection_window_ms: DEFAULT_COLLECTION_WINDOW_MS,
            partitions: Vec::new(),
        }
    }
}

/// Nodes in different groups cannot exchange messages while
/// `start_round <= round < end_round`. Unlisted nodes share one extra group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub start_round: u64,
    pub end_round: u64,
    pub groups: Vec<Vec<NodeId>>,
}

impl PartitionSpec {
    pub fn active(&self, round: u64) -> bool {
        (self.start_round..self.end_round).contains(&round)
    }

    pub fn group_of(&self, node: NodeId) -> usize {
        self.groups
            .iter()
            .position(|g| g.contains(&node))
            .unwrap_or(self.groups.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VoteModeSpec {
    #[default]
    Expected,
    Sampled,
}

impl From<VoteModeSpec> for VoteMode {
    fn from(m: VoteModeSpec) -> Self {
        match m {
            VoteModeSpec::Expected => VoteMode::Expected,
            VoteModeSpec::Sampled => VoteMode::Sampled,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusSpec {
    /// Maximum acceptable block-processing delay, seconds.
    pub theta_s: f64,
    pub committee_size: usize,
    pub block_interval_s: u64,
    pub tau_final_s: f64,
    pub tau_hash_s: f64,
    pub tau_sig_s: f64,
    /// Modelled incentive computation time per reporting witness.
    pub tau_ic_s_per_witness: f64,
    /// Per-node compute speed factors are drawn from `[1 - spread, 1 + spread]`.
    pub compute_spread: f64,
    pub vote_mode: VoteModeSpec,
    pub tx_lifetime_blocks: u64,
    /// Fixed producer order that replaces the election.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pinned_committee: Option<Vec<NodeId>>,
}

impl Default for ConsensusSpec {
    fn default() -> Self {
        ConsensusSpec {
            theta_s: 6.0,
            committee_size: 5,
            block_interval_s: 3,
            tau_final_s: DEFAULT_TAU_FINAL_S,
            tau_hash_s: 0.01,
            tau_sig_s: 0.05,
            tau_ic_s_per_witness: 0.02,
            compute_spread: 0.5,
            vote_mode: VoteModeSpec::Expected,
            tx_lifetime_blocks: 100,
            pinned_committee: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSpec {
    pub k_rep: f64,
    /// Zero-potential ratio; fixes `k_att` from `k_rep`.
    pub lambda: f64,
    /// Repulsive cutoff R_r in meters.
    pub r_rep_m: f64,
    pub alpha: f64,
    pub epsilon_sing: f64,
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec {
            k_rep: 1.0,
            lambda: 1.5,
            r_rep_m: 100.0,
            alpha: 0.09,
            epsilon_sing: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IncentiveSpec {
    /// Budget paid out at every epoch boundary.
    pub budget: f64,
    pub epoch_blocks: u64,
    /// Credit per produced block, for balance reporting.
    pub block_credit: f64,
}

impl Default for IncentiveSpec {
    fn default() -> Self {
        IncentiveSpec {
            budget: 1000.0,
            epoch_blocks: 100,
            block_credit: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedAttack {
    /// Injected after this round completes.
    pub round: u64,
    pub action: AdversaryAction,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::standard()
    }
}

impl Scenario {
    /// Ten witnesses, three provers, 200 rounds, seed 7.
    pub fn standard() -> Self {
        Scenario {
            schema_version: SCHEMA_VERSION,
            seed: 7,
            rounds: 200,
            region: RegionSpec::default(),
            witnesses: WitnessSpec::default(),
            provers: ProverSpec::default(),
            network: NetworkSpec::default(),
            consensus: ConsensusSpec::default(),
            field: FieldSpec::default(),
            incentive: IncentiveSpec::default(),
            adversary: Vec::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario fields are all representable")
    }

    pub fn node_count(&self) -> usize {
        self.witnesses.count + self.provers.count
    }

    /// Witnesses take ids `0..W`, provers `W..W+P`.
    pub fn prover_node(&self, prover: usize) -> NodeId {
        (self.witnesses.count + prover) as NodeId
    }

    pub fn region(&self) -> Region {
        Region::new(self.region.width_m, self.region.height_m)
    }

    pub fn frame(&self) -> LocalFrame {
        LocalFrame::new(
            Location::from_degrees(self.region.origin_lat, self.region.origin_lon)
                .expect("validated origin"),
        )
    }

    pub fn field_params(&self) -> FieldParams {
        let f = &self.field;
        FieldParams {
            epsilon_sing: f.epsilon_sing,
            ..FieldParams::from_lambda(f.k_rep, f.lambda, f.r_rep_m, f.alpha)
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return invalid(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.rounds == 0 {
            return invalid("rounds must be positive");
        }
        let r = &self.region;
        if !(r.width_m > 0.0 && r.height_m > 0.0) {
            return invalid("region dimensions must be positive");
        }
        if Location::from_degrees(r.origin_lat, r.origin_lon).is_err() {
            return invalid("region origin is not a valid coordinate");
        }
        let w = &self.witnesses;
        if !(w.radius_m > 0.0 && w.mass > 0.0 && w.patch_m >= 0.0) {
            return invalid("witness radius and mass must be positive");
        }
        if let Some(pos) = &w.positions {
            if pos.len() != w.count {
                return invalid("witness positions must match witness count");
            }
        }
        let p = &self.provers;
        if p.proof_interval_rounds == 0 || p.speed_m_per_round < 0.0 || p.roam_m < 0.0 {
            return invalid("prover interval must be positive, speed and roam non-negative");
        }
        match &p.paths {
            Some(paths) if paths.len() != p.count || paths.iter().any(Vec::is_empty) => {
                return invalid("prover paths must give a non-empty loop per prover");
            }
            None if p.count > 0 && p.waypoints == 0 => {
                return invalid("generated prover paths need at least one waypoint");
            }
            _ => {}
        }
        let n = &self.network;
        if !(0.0 <= n.latency_min_s && n.latency_min_s <= n.latency_max_s && n.jitter_s >= 0.0) {
            return invalid("latency range must satisfy 0 <= min <= max, jitter >= 0");
        }
        if !(0.0..=1.0).contains(&n.ble_success) {
            return invalid("ble_success must lie in [0, 1]");
        }
        let nodes = self.node_count() as NodeId;
        for part in &n.partitions {
            if part.start_round >= part.end_round {
                return invalid("partition must end after it starts");
            }
            if part.groups.iter().flatten().any(|&id| id >= nodes) {
                return invalid("partition names an unknown node");
            }
        }
        let c = &self.consensus;
        if c.committee_size == 0 || c.block_interval_s == 0 || c.tx_lifetime_blocks == 0 {
            return invalid("committee size, block interval and tx lifetime must be positive");
        }
        let delays = [c.theta_s, c.tau_final_s, c.tau_hash_s, c.tau_sig_s, c.tau_ic_s_per_witness];
        if delays.iter().any(|d| d.is_nan() || *d < 0.0) || !(0.0..1.0).contains(&c.compute_spread) {
            return invalid("delays must be non-negative and compute_spread in [0, 1)");
        }
        if let Some(pinned) = &c.pinned_committee {
            if pinned.is_empty() || pinned.iter().any(|&id| id >= nodes) {
                return invalid("pinned committee must list known nodes");
            }
        }
        let f = &self.field;
        if !(f.k_rep >= 0.0 && f.lambda > 0.0 && f.r_rep_m > 0.0 && f.epsilon_sing > 0.0) {
            return invalid("field constants must be positive");
        }
        if !(0.0 < f.alpha && f.alpha < 1.0) {
            return invalid("alpha must lie in (0, 1)");
        }
        let i = &self.incentive;
        if i.epoch_blocks == 0 || i.budget.is_nan() || i.budget < 0.0 {
            return invalid("epoch length must be positive and budget non-negative");
        }
        for attack in &self.adversary {
            attack.action.validate().map_err(ScenarioError::Invalid)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_roundtrips_through_toml() {
        let s = Scenario::standard();
        let text = s.to_toml();
        assert_eq!(Scenario::from_toml_str(&text).unwrap(), s);
        assert_eq!(s.node_count(), 13);
        assert_eq!(s.prover_node(0), 10);
    }

    #[test]
    fn sections_default_when_omitted() {
        let s = Scenario::from_toml_str("schema_version = 1\nseed = 3\nrounds = 10\n").unwrap();
        assert_eq!(s.witnesses, WitnessSpec::default());
        assert_eq!(s.seed, 3);
    }

    #[test]
    fn schema_violations_rejected() {
        let bad = [
            "schema_version = 2\nseed = 1\nrounds = 1\n",
            "schema_version = 1\nseed = 1\nrounds = 0\n",
            "schema_version = 1\nseed = 1\nrounds = 1\nbogus = 3\n",
            "schema_version = 1\nrounds = 1\n",
            "schema_version = 1\nseed = 1\nrounds = 1\n[field]\nalpha = 1.5\n",
            "schema_version = 1\nseed = 1\nrounds = 1\n[[network.partitions]]\nstart_round = 1\nend_round = 3\ngroups = [[0], [99]]\n",
            "schema_version = 1\nseed = 1\nrounds = 1\n[witnesses]\ncount = 2\npositions = [[1.0, 1.0]]\n",
        ];
        for text in bad {
            assert!(Scenario::from_toml_str(text).is_err(), "accepted: {text}");
        }
    }

    #[test]
    fn partition_groups() {
        let p = PartitionSpec {
            start_round: 2,
            end_round: 4,
            groups: vec![vec![0, 1], vec![2]],
        };
        assert!(!p.active(1) && p.active(2) && p.active(3) && !p.active(4));
        assert_eq!((p.group_of(1), p.group_of(2), p.group_of(7)), (0, 1, 2));
    }
}
