//! Run results and their on-disk bundle.

use std::fmt::Write as _;
use std::path::Path;

use crate::consensus::{Election, NodeId};
use crate::crypto::{hash, Hash32};
use crate::ledger::{export_chain, IncentiveLedger, Operation};
use crate::pol::{generate_summary, prove_ownership, reveal_location, CommitmentLookup, OwnershipVerifier};

use super::adversary::{AttackOutcome, AttackTally};
use super::scenario::SCHEMA_VERSION;
use super::{RunStats, Simulation};

/// File names in a run bundle.
pub const BUNDLE_FILES: [&str; 7] = [
    "rounds.csv",
    "allocations.csv",
    "committee.csv",
    "attacks.csv",
    "verification.csv",
    "summary.txt",
    "chain.bin",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundRow {
    pub round: u64,
    pub node: u32,
    pub x: f64,
    pub y: f64,
    /// Net field force magnitude.
    pub force: f64,
    pub coverage: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationRow {
    pub epoch: u64,
    pub node: Option<NodeId>,
    pub address: String,
    pub amount: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationRow {
    pub prover: usize,
    pub timestamp: u64,
    pub trust_level: usize,
    pub on_chain: bool,
    pub verified: bool,
    /// The revealed on-chain location equals the prover's own record.
    pub location_matches: bool,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub seed: u64,
    pub rounds: u64,
    pub chain_height: u64,
    pub tip: Hash32,
    /// Reference node's chain export.
    pub chain: Vec<u8>,
    /// Coverage estimate per round, round 0 first.
    pub coverage: Vec<f64>,
    pub rows: Vec<RoundRow>,
    pub allocations: Vec<AllocationRow>,
    pub elections: Vec<(u64, Election)>,
    pub attacks: Vec<AttackOutcome>,
    pub verification: Vec<VerificationRow>,
    pub balances: Vec<(String, f64)>,
    pub stats: RunStats,
    pub converged: bool,
    pub drops: usize,
    pub duplicate_keys: usize,
}

/// Schema row followed by the column row, as every CSV table starts.
pub fn csv_header(table: &str, columns: &str) -> String {
    format!("# bychain schema_version={SCHEMA_VERSION} table={table}\n{columns}\n")
}

/// Hash over named files, names and lengths included, in the given order.
pub fn bundle_digest<'a>(files: impl IntoIterator<Item = (&'a str, &'a [u8])>) -> Hash32 {
    let mut all = Vec::new();
    for (name, body) in files {
        all.extend_from_slice(name.as_bytes());
        all.extend_from_slice(&(body.len() as u64).to_be_bytes());
        all.extend_from_slice(body);
    }
    hash(&all)
}

/// Repeated-attempt tallies as a CSV table.
pub fn tallies_csv(tallies: &[AttackTally]) -> String {
    let mut out = csv_header("attack_tallies", "action,attempts,detected,succeeded,expected,met,evidence");
    for t in tallies {
        let expected = t.expected.map(|e| e.to_string()).unwrap_or_else(|| "none".into());
        let _ = writeln!(
            out,
            "\"{}\",{},{},{},{expected},{},\"{}\"",
            t.action,
            t.attempts,
            t.detected,
            t.succeeded(),
            t.met(),
            t.evidence.replace('"', "'")
        );
    }
    out
}

impl RunReport {
    pub fn commitments_on_chain(&self) -> usize {
        self.verification.iter().filter(|v| v.on_chain).count()
    }

    pub fn verified(&self) -> usize {
        self.verification.iter().filter(|v| v.verified).count()
    }

    pub fn rounds_csv(&self) -> String {
        let mut out = csv_header("rounds", "round,node,x,y,force,coverage");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{:.9e},{:.6}",
                r.round, r.node, r.x, r.y, r.force, r.coverage
            );
        }
        out
    }

    pub fn allocations_csv(&self) -> String {
        let mut out = csv_header("allocations", "epoch,node,address,amount");
        for a in &self.allocations {
            let node = a.node.map(|n| n.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{node},{},{:.9}", a.epoch, a.address, a.amount);
        }
        out
    }

    pub fn committee_csv(&self) -> String {
        let mut out = csv_header("committee", "epoch,node,votes,elected");
        for (epoch, e) in &self.elections {
            for row in e.csv_rows(*epoch) {
                out.push_str(&row);
                out.push('\n');
            }
        }
        out
    }

    pub fn attacks_csv(&self) -> String {
        let mut out = csv_header("attacks", "round,action,verdict,expected,met,evidence");
        for a in &self.attacks {
            let expected = a.expected.map(|e| e.to_string()).unwrap_or_else(|| "none".into());
            let _ = writeln!(
                out,
                "{},\"{}\",{},{expected},{},\"{}\"",
                a.round,
                a.action,
                a.verdict,
                a.met(),
                a.evidence.replace('"', "'")
            );
        }
        out
    }

    pub fn verification_csv(&self) -> String {
        let mut out = csv_header(
            "verification",
            "prover,timestamp,trust_level,on_chain,verified,location_matches,lat,lon",
        );
        for v in &self.verification {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.7},{:.7}",
                v.prover, v.timestamp, v.trust_level, v.on_chain, v.verified, v.location_matches, v.lat, v.lon
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        let first = self.coverage.first().copied().unwrap_or(0.0);
        let last = self.coverage.last().copied().unwrap_or(0.0);
        let met = self.attacks.iter().filter(|a| a.met()).count();
        let mut s = String::new();
        let _ = writeln!(s, "bychain run report (schema_version={SCHEMA_VERSION})");
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "rounds: {}", self.rounds);
        let _ = writeln!(s, "chain height: {}", self.chain_height);
        let _ = writeln!(s, "tip: {}", self.tip);
        let _ = writeln!(s, "nodes converged: {}", self.converged);
        let _ = writeln!(s, "blocks produced: {}", self.stats.blocks_produced);
        let _ = writeln!(s, "blocks rejected: {}", self.stats.blocks_rejected);
        let _ = writeln!(s, "reorgs: {}", self.stats.reorgs);
        let _ = writeln!(s, "messages dropped: {}", self.drops);
        let _ = writeln!(s, "proofs attempted: {}", self.stats.proofs_attempted);
        let _ = writeln!(s, "commitments built: {}", self.stats.commitments_built);
        let _ = writeln!(s, "proofs without witness: {}", self.stats.no_witness);
        let _ = writeln!(s, "commitments on chain: {}", self.commitments_on_chain());
        let _ = writeln!(s, "ownership verified: {}/{}", self.verified(), self.verification.len());
        let _ = writeln!(s, "duplicate one-use keys: {}", self.duplicate_keys);
        let _ = writeln!(s, "coverage: {first:.6} -> {last:.6}");
        let _ = writeln!(s, "epochs paid: {}", self.allocations.iter().map(|a| a.epoch).max().map_or(0, |e| e + 1));
        let _ = writeln!(s, "attacks meeting expectation: {met}/{}", self.attacks.len());
        for (addr, bal) in &self.balances {
            let _ = writeln!(s, "balance {addr}: {bal:.6}");
        }
        s
    }

    /// Bundle contents in [`BUNDLE_FILES`] order.
    pub fn files(&self) -> Vec<(&'static str, Vec<u8>)> {
        let text = [
            self.rounds_csv(),
            self.allocations_csv(),
            self.committee_csv(),
            self.attacks_csv(),
            self.verification_csv(),
            self.summary(),
        ];
        let mut files: Vec<(&'static str, Vec<u8>)> = BUNDLE_FILES
            .iter()
            .zip(text)
            .map(|(name, body)| (*name, body.into_bytes()))
            .collect();
        files.push((BUNDLE_FILES[6], self.chain.clone()));
        files
    }

    /// Hash over every bundle file, names included.
    pub fn digest(&self) -> Hash32 {
        let files = self.files();
        bundle_digest(files.iter().map(|(n, b)| (*n, b.as_slice())))
    }

    pub fn write_bundle(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in self.files() {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

impl Simulation {
    /// Stage 2 for every prover note against the reference node, then the
    /// report.
    pub fn finish(mut self) -> RunReport {
        let mut verification = Vec::new();
        let mut verifier = OwnershipVerifier::default();
        let store = &self.nodes[0].store;
        for (p, prover) in self.provers.iter().enumerate() {
            let mut revealed = Vec::new();
            for note in &prover.notes {
                let v = note.verification_request();
                let commitment = store.find_commitment(&v.index_key());
                let verified = match verifier.issue_challenge(store, &v, &mut self.rng) {
                    Ok(r) => {
                        let proof = prove_ownership(note, &r).expect("note key signs");
                        verifier.verify_ownership(store, &v, &r, &proof)
                    }
                    Err(_) => false,
                };
                let shown = commitment
                    .as_ref()
                    .filter(|_| verified)
                    .and_then(|c| reveal_location(c, &note.location_key).ok());
                if let (Some(c), Some(loc)) = (&commitment, shown) {
                    revealed.push((c.clone(), loc));
                }
                verification.push(VerificationRow {
                    prover: p,
                    timestamp: note.timestamp,
                    trust_level: commitment.as_ref().map_or(0, |c| c.witness_count()),
                    on_chain: commitment.is_some(),
                    verified,
                    location_matches: shown == Some(note.location),
                    lat: note.location.lat_deg(),
                    lon: note.location.lon_deg(),
                });
            }
            let summary = generate_summary(&revealed);
            log::debug!("prover {p}: {} verified entries", summary.entries.len());
        }

        let e = self.rules.epoch_blocks();
        let tip_height = store.tip_height();
        let tip = store.tip();
        let mut elections = Vec::new();
        let mut epoch = 0;
        while epoch * e < tip_height {
            if let Some(el) = self.rules.election(store, &tip, epoch * e + 1) {
                elections.push((epoch, el));
            }
            epoch += 1;
        }

        let mut allocations = Vec::new();
        for block in store.main_blocks() {
            for op in block.operations() {
                if let Operation::IncentiveAllocation(a) = op {
                    for (addr, amount) in &a.allocations {
                        allocations.push(AllocationRow {
                            epoch: a.epoch,
                            node: self.rules.node_of(addr),
                            address: addr.to_hex(),
                            amount: *amount,
                        });
                    }
                }
            }
        }
        let balances = IncentiveLedger::from_chain(store, self.scenario.incentive.block_credit)
            .balances()
            .iter()
            .map(|(a, b)| (a.to_hex(), *b))
            .collect();

        let tips = self.tips();
        RunReport {
            seed: self.scenario.seed,
            rounds: self.round,
            chain_height: tip_height,
            tip,
            chain: export_chain(store),
            coverage: self.coverage.clone(),
            rows: std::mem::take(&mut self.rows),
            allocations,
            elections,
            attacks: std::mem::take(&mut self.attacks),
            verification,
            balances,
            stats: self.stats.clone(),
            converged: tips.iter().all(|t| *t == tips[0]),
            drops: self.drops().len(),
            duplicate_keys: self.duplicate_commitment_keys(),
        }
    }
}

/// Runs a scenario to completion.
pub fn run(scenario: super::Scenario) -> Result<RunReport, super::ScenarioError> {
    Ok(Simulation::new(scenario)?.run())
}
