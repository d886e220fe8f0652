//! Scripted attacks against live simulation state.
//!
//! Every attempt goes through the same checks an honest node applies:
//! response verification, commitment assembly, mempool admission, block
//! import and the ownership verifier. Nothing here panics on an attack that
//! gets through; it is reported as succeeded.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::crypto::{Signature, SIGNATURE_LEN};
use crate::field::{allocate_incentive, EpochBudget, Vec2};
use crate::ledger::{export_chain, import_chain, Operation, Transaction, TxRejection};
use crate::pol::{
    assess_endorsement, build_pol_request, combine_responses, prove_ownership, witness_validate,
    CollectedResponse, EndorsementAssessment, OwnershipProof, OwnershipVerifier, PoLCommitment,
    PoLRequest, PoLResponse, WitnessNonce,
};
use crate::wire::{put_u16, Decode, Encode};

use super::Simulation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversaryAction {
    /// Resubmit a commitment that is already on chain.
    ReplayCommitment,
    /// Reuse a recorded endorsement under a new request placed `offset_m`
    /// east of the region centre.
    RelaySignature { offset_m: f64 },
    /// Claim a position `offset_m` east of where the claimant stands.
    FalseLocationClaim { offset_m: f64 },
    /// Attach a response under an honest witness's key that it never signed.
    ForgeWitnessSig,
    /// `fraction` of `witnesses` encountered witnesses endorse a false claim.
    ColludeWitnesses { fraction: f64, witnesses: usize },
    /// A witness reports its net force scaled by `multiplier`.
    FalseForceReport { multiplier: f64 },
}

impl AdversaryAction {
    pub fn validate(&self) -> Result<(), String> {
        let ok = match self {
            Self::ReplayCommitment | Self::ForgeWitnessSig => true,
            Self::RelaySignature { offset_m } | Self::FalseLocationClaim { offset_m } => {
                offset_m.is_finite() && *offset_m >= 0.0
            }
            Self::ColludeWitnesses { fraction, witnesses } => {
                (0.0..=1.0).contains(fraction) && *witnesses > 0
            }
            Self::FalseForceReport { multiplier } => multiplier.is_finite() && *multiplier >= 0.0,
        };
        ok.then_some(())
            .ok_or_else(|| format!("adversary action out of range: {self}"))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::ReplayCommitment => "replay_commitment",
            Self::RelaySignature { .. } => "relay_signature",
            Self::FalseLocationClaim { .. } => "false_location_claim",
            Self::ForgeWitnessSig => "forge_witness_sig",
            Self::ColludeWitnesses { .. } => "collude_witnesses",
            Self::FalseForceReport { .. } => "false_force_report",
        }
    }

    /// The standard suite: one scenario per security property plus both
    /// sides of the collusion bound.
    pub fn suite() -> Vec<AdversaryAction> {
        vec![
            Self::ReplayCommitment,
            Self::RelaySignature { offset_m: 300.0 },
            Self::FalseLocationClaim { offset_m: 500.0 },
            Self::ForgeWitnessSig,
            Self::ColludeWitnesses {
                fraction: 0.4,
                witnesses: 5,
            },
            Self::ColludeWitnesses {
                fraction: 0.6,
                witnesses: 5,
            },
            Self::FalseForceReport { multiplier: 0.1 },
        ]
    }

    /// Colluders among the encountered witnesses.
    fn colluders(fraction: f64, witnesses: usize) -> usize {
        ((fraction * witnesses as f64).round() as usize).min(witnesses)
    }

    /// Outcome the protocol should produce, if one is determined.
    /// `radius_m` is the radio range and `max_distance_m` the witness
    /// acceptance distance.
    pub fn expected(&self, radius_m: f64, max_distance_m: f64) -> Option<Verdict> {
        match self {
            Self::ReplayCommitment | Self::RelaySignature { .. } | Self::ForgeWitnessSig => {
                Some(Verdict::Detected)
            }
            // Any witness in radio range is then beyond its acceptance distance.
            Self::FalseLocationClaim { offset_m } => {
                (*offset_m > radius_m + max_distance_m).then_some(Verdict::Detected)
            }
            Self::ColludeWitnesses { fraction, witnesses } => {
                let k = Self::colluders(*fraction, *witnesses);
                Some(match assess_endorsement(*witnesses, k) {
                    EndorsementAssessment::Safe => Verdict::Detected,
                    EndorsementAssessment::Compromised => Verdict::Succeeded,
                })
            }
            // Allocations trust reported forces; nothing checks them.
            Self::FalseForceReport { .. } => Some(Verdict::Succeeded),
        }
    }
}

impl fmt::Display for AdversaryAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RelaySignature { offset_m } | Self::FalseLocationClaim { offset_m } => {
                write!(f, "{}(offset_m={offset_m})", self.name())
            }
            Self::ColludeWitnesses { fraction, witnesses } => {
                write!(f, "{}(fraction={fraction},witnesses={witnesses})", self.name())
            }
            Self::FalseForceReport { multiplier } => {
                write!(f, "{}(multiplier={multiplier})", self.name())
            }
            _ => f.write_str(self.name()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Detected,
    Succeeded,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Detected => "detected",
            Verdict::Succeeded => "succeeded",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackOutcome {
    pub round: u64,
    pub action: AdversaryAction,
    pub verdict: Verdict,
    pub expected: Option<Verdict>,
    pub evidence: String,
}

impl AttackOutcome {
    /// True when no expectation exists or the verdict matches it.
    pub fn met(&self) -> bool {
        self.expected.is_none_or(|e| e == self.verdict)
    }
}

/// Outcome counts over repeated attempts of one action.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackTally {
    pub action: AdversaryAction,
    pub attempts: usize,
    pub detected: usize,
    pub expected: Option<Verdict>,
    /// Evidence from the first attempt that went against expectation, or
    /// from the first attempt if none did.
    pub evidence: String,
}

impl AttackTally {
    pub fn succeeded(&self) -> usize {
        self.attempts - self.detected
    }

    pub fn met(&self) -> bool {
        match self.expected {
            None => true,
            Some(Verdict::Detected) => self.detected == self.attempts,
            Some(Verdict::Succeeded) => self.detected == 0,
        }
    }
}

fn rejected(result: Result<impl Sized, TxRejection>) -> Option<TxRejection> {
    result.err()
}

impl Simulation {
    /// Runs one attempt of `action` against the current state.
    pub fn inject(&mut self, action: &AdversaryAction) -> AttackOutcome {
        let (verdict, evidence) = self.attempt(action, 0);
        AttackOutcome {
            round: self.round,
            action: action.clone(),
            verdict,
            expected: self.expected(action),
            evidence,
        }
    }

    /// Runs `attempts` varied attempts of `action`.
    pub fn inject_repeated(&mut self, action: &AdversaryAction, attempts: usize) -> AttackTally {
        let expected = self.expected(action);
        let mut detected = 0;
        let mut evidence = None;
        for i in 0..attempts {
            let (verdict, ev) = self.attempt(action, i);
            if verdict == Verdict::Detected {
                detected += 1;
            }
            let surprising = expected.is_some_and(|e| e != verdict);
            if evidence.is_none() || (surprising && !evidence.as_ref().is_some_and(|(s, _)| *s)) {
                evidence = Some((surprising, ev));
            }
        }
        AttackTally {
            action: action.clone(),
            attempts,
            detected,
            expected,
            evidence: evidence.map(|(_, e)| e).unwrap_or_default(),
        }
    }

    fn expected(&self, action: &AdversaryAction) -> Option<Verdict> {
        action.expected(self.policy.radius_m, self.policy.max_distance_m())
    }

    fn attempt(&mut self, action: &AdversaryAction, i: usize) -> (Verdict, String) {
        match action {
            AdversaryAction::ReplayCommitment => self.replay(i),
            AdversaryAction::RelaySignature { offset_m } => self.relay(i, *offset_m),
            AdversaryAction::FalseLocationClaim { offset_m } => self.false_location(*offset_m),
            AdversaryAction::ForgeWitnessSig => self.forge(i),
            AdversaryAction::ColludeWitnesses { fraction, witnesses } => {
                self.collude(*fraction, *witnesses)
            }
            AdversaryAction::FalseForceReport { multiplier } => self.false_force(i, *multiplier),
        }
    }

    fn pick_commitment(&self, i: usize) -> Option<PoLCommitment> {
        let all = self.chain_commitments();
        (!all.is_empty()).then(|| all[i % all.len()].clone())
    }

    /// Submits to a copy of the reference node's mempool so that an
    /// admitted attack leaves honest state untouched.
    fn probe_mempool(&self, tx: Transaction) -> Option<TxRejection> {
        let node = &self.nodes[0];
        let mut pool = node.pool.clone();
        rejected(pool.submit(&node.store, tx))
    }

    fn adversary_tx(&self, op: Operation) -> Transaction {
        Transaction::new(vec![op], self.expiration(0), &self.adversary_keys).expect("adversary key signs")
    }

    /// Assembles commitment bytes directly, bypassing the honest builder.
    fn raw_commitment(request: &PoLRequest, responses: &[PoLResponse]) -> Option<PoLCommitment> {
        let mut bytes = request.to_bytes();
        put_u16(&mut bytes, responses.len() as u16);
        for r in responses {
            r.nonce_w.encode_to(&mut bytes);
            r.sig_w.encode_to(&mut bytes);
        }
        PoLCommitment::from_bytes(&bytes).ok()
    }

    /// Checks a smuggled response three ways: direct verification, the
    /// commitment builder, and mempool admission of a hand-built commitment.
    fn smuggle(&mut self, request: &PoLRequest, response: PoLResponse) -> (Verdict, String) {
        let verifies = response.verify_witness();
        let collected = [CollectedResponse {
            response: response.clone(),
            arrival_ms: 1,
        }];
        let built = combine_responses(request, &collected, self.scenario.network.collection_window_ms).is_ok();
        let admitted = match Self::raw_commitment(request, &[response]) {
            Some(c) => match self.probe_mempool(self.adversary_tx(Operation::PoLCommitment(c))) {
                None => "admitted".to_string(),
                Some(r) => format!("mempool rejected ({r})"),
            },
            None => "undecodable".to_string(),
        };
        let detected = !verifies && !built && admitted != "admitted";
        let evidence = format!(
            "response verifies: {verifies}; commitment builder accepted: {built}; hand-built commitment {admitted}"
        );
        (if detected { Verdict::Detected } else { Verdict::Succeeded }, evidence)
    }

    fn replay(&mut self, i: usize) -> (Verdict, String) {
        let Some(c) = self.pick_commitment(i) else {
            return (Verdict::Succeeded, "no commitment on chain to replay; replay filter not exercised".into());
        };
        let tx = self.adversary_tx(Operation::PoLCommitment(c));
        match self.probe_mempool(tx) {
            Some(TxRejection::Replay) => (Verdict::Detected, "resubmitted commitment rejected as replay".into()),
            Some(other) => (Verdict::Detected, format!("resubmitted commitment rejected: {other}")),
            None => (Verdict::Succeeded, "resubmitted commitment admitted to mempool".into()),
        }
    }

    fn claimant_location(&self, offset_m: f64) -> crate::pol::Location {
        let c = self.region.center();
        self.location_of(&Vec2::new(c.x + offset_m, c.y))
    }

    fn adversary_request(&mut self, location: crate::pol::Location) -> (crate::pol::PoLAdvertisement, u64) {
        let ts = self.timestamp(self.round.max(1));
        let (advert, _) = build_pol_request(&mut self.adversary_escrow, location, ts, &mut self.attack_rng)
            .expect("adversary escrow holds a key");
        (advert, ts)
    }

    fn relay(&mut self, i: usize, offset_m: f64) -> (Verdict, String) {
        let Some(c) = self.pick_commitment(i) else {
            return (Verdict::Succeeded, "no recorded endorsement to relay; check not exercised".into());
        };
        let e = c.endorsements()[i % c.witness_count()];
        let loc = self.claimant_location(offset_m);
        let (advert, _) = self.adversary_request(loc);
        let relayed = PoLResponse {
            request: advert.request.clone(),
            nonce_w: e.nonce_w,
            sig_w: e.sig_w,
        };
        self.smuggle(&advert.request, relayed)
    }

    fn forge(&mut self, i: usize) -> (Verdict, String) {
        if self.signers.is_empty() {
            return (Verdict::Succeeded, "no witness to impersonate; check not exercised".into());
        }
        let w = i % self.signers.len();
        let target = self.states[w].position;
        let loc = self.location_of(&target);
        let (advert, _) = self.adversary_request(loc);
        let nonce_w = WitnessNonce {
            witness: self.signers[w].public(),
            counter: self.signers[w].counter() + 1,
        };
        let mut forged = PoLResponse {
            request: advert.request.clone(),
            nonce_w,
            sig_w: Signature::NONE,
        };
        forged.sig_w = match i % 3 {
            0 => self
                .adversary_keys
                .sign(&forged.signing_payload())
                .expect("adversary key signs"),
            1 => {
                let mut bytes = [0u8; SIGNATURE_LEN];
                self.attack_rng.fill_bytes(&mut bytes);
                Signature(bytes)
            }
            _ => match self.pick_commitment(i) {
                Some(c) => c.endorsements()[0].sig_w,
                None => Signature::NONE,
            },
        };
        self.smuggle(&advert.request, forged)
    }

    fn centroid(&self) -> Vec2 {
        if self.states.is_empty() {
            return self.region.center();
        }
        self.states.iter().map(|s| s.position).sum::<Vec2>() / self.states.len() as f64
    }

    fn false_location(&mut self, offset_m: f64) -> (Verdict, String) {
        let here = self.centroid();
        let claimed = self.location_of(&(here + Vec2::new(offset_m, 0.0)));
        let ts = self.timestamp(self.round.max(1));
        let (advert, _) = build_pol_request(&mut self.adversary_escrow, claimed, ts, &mut self.attack_rng)
            .expect("adversary escrow holds a key");
        let in_range = self.witnesses_in_range(&here);
        let mut collected = Vec::new();
        for &w in &in_range {
            let wloc = self.location_of(&self.states[w].position);
            if witness_validate(&advert, &wloc, &self.policy, ts).is_ok() {
                collected.push(CollectedResponse {
                    response: self.signers[w].respond(&advert.request).expect("witness keys sign"),
                    arrival_ms: 1,
                });
            }
        }
        let window = self.scenario.network.collection_window_ms;
        let evidence = format!(
            "{} of {} witnesses in range endorsed a claim {offset_m} m from the claimant",
            collected.len(),
            in_range.len()
        );
        match combine_responses(&advert.request, &collected, window) {
            Ok(_) => (Verdict::Succeeded, evidence),
            Err(_) => (Verdict::Detected, evidence),
        }
    }

    fn collude(&mut self, fraction: f64, witnesses: usize) -> (Verdict, String) {
        let here = self.centroid();
        let m = witnesses.min(self.states.len());
        if m == 0 {
            return (Verdict::Detected, "no witnesses to collude".into());
        }
        let mut nearest: Vec<usize> = (0..self.states.len()).collect();
        nearest.sort_by(|&a, &b| {
            let da = (self.states[a].position - here).norm();
            let db = (self.states[b].position - here).norm();
            da.total_cmp(&db).then(a.cmp(&b))
        });
        nearest.truncate(m);
        let k = AdversaryAction::colluders(fraction, m);
        let offset = 3.0 * self.policy.max_distance_m() + self.policy.radius_m;
        let claimed = self.location_of(&(here + Vec2::new(offset, 0.0)));
        let ts = self.timestamp(self.round.max(1));
        let (advert, _) = build_pol_request(&mut self.adversary_escrow, claimed, ts, &mut self.attack_rng)
            .expect("adversary escrow holds a key");

        let mut collected = Vec::new();
        let mut honest_refusals = 0;
        for (rank, &w) in nearest.iter().enumerate() {
            let colluding = rank < k;
            let wloc = self.location_of(&self.states[w].position);
            if colluding || witness_validate(&advert, &wloc, &self.policy, ts).is_ok() {
                collected.push(CollectedResponse {
                    response: self.signers[w].respond(&advert.request).expect("witness keys sign"),
                    arrival_ms: 1,
                });
            } else {
                honest_refusals += 1;
            }
        }
        let window = self.scenario.network.collection_window_ms;
        let endorsed = combine_responses(&advert.request, &collected, window)
            .map(|c| c.witness_count())
            .unwrap_or(0);
        match assess_endorsement(m, endorsed) {
            EndorsementAssessment::Safe => (
                Verdict::Detected,
                format!(
                    "{endorsed} of {m} encountered witnesses endorsed a false claim, {honest_refusals} refused; honest majority, claim flagged untrusted"
                ),
            ),
            EndorsementAssessment::Compromised => (
                Verdict::Succeeded,
                format!(
                    "{endorsed} of {m} encountered witnesses endorsed a false claim, {honest_refusals} refused; colluding majority, claim marked compromised"
                ),
            ),
        }
    }

    fn false_force(&mut self, i: usize, multiplier: f64) -> (Verdict, String) {
        if self.states.is_empty() {
            return (Verdict::Detected, "no witness to misreport".into());
        }
        let honest: Vec<f64> = self.states.iter().map(|s| s.net_force.norm()).collect();
        let mut reported = honest.clone();
        reported[0] *= multiplier;
        let budget = EpochBudget::new(self.scenario.incentive.budget, self.scenario.incentive.epoch_blocks);
        let before = allocate_incentive(&honest, &budget)[0];
        let after = allocate_incentive(&reported, &budget)[0];

        let s = self.states[0];
        let op = Operation::WitnessReport {
            position: self.location_of(&s.position),
            net_force: [s.net_force.x * multiplier, s.net_force.y * multiplier],
        };
        // Distinct expirations keep repeated attempts from being exact duplicates.
        let expiration = self.expiration(0) + i as u64;
        let tx = Transaction::new(vec![op], expiration, &self.nodes[0].keys).expect("witness key signs");
        let admitted = self.probe_mempool(tx.clone()).is_none();
        if admitted {
            self.broadcast_tx(0, tx, self.round);
        }
        let evidence = format!(
            "witness 0 reported |F| x{multiplier}; report admitted: {admitted}; its share {before:.6} -> {after:.6}"
        );
        (if admitted { Verdict::Succeeded } else { Verdict::Detected }, evidence)
    }

    /// Flips one random bit of the reference chain export per trial and
    /// re-imports it with full validation. Returns the number detected.
    pub fn tamper_trials(&mut self, trials: usize) -> usize {
        let export = export_chain(&self.nodes[0].store);
        let now = self.timestamp(self.round);
        let mut detected = 0;
        for _ in 0..trials {
            let mut bytes = export.clone();
            let bit = self.attack_rng.gen_range(0..bytes.len() * 8);
            bytes[bit / 8] ^= 1 << (bit % 8);
            if import_chain(&bytes, self.config.clone(), &self.rules, now).is_err() {
                detected += 1;
            }
        }
        detected
    }

    /// Adversarial ownership proofs for on-chain notes, none made with the
    /// note's one-use key. Returns how many the verifier accepted.
    pub fn ownership_false_accepts(&mut self, trials: usize) -> usize {
        let store = &self.nodes[0].store;
        let notes: Vec<_> = self
            .provers
            .iter()
            .flat_map(|p| p.notes.iter())
            .filter(|n| store.index().locate(&n.verification_request().index_key()).is_some())
            .collect();
        if notes.is_empty() {
            return 0;
        }
        let mut verifier = OwnershipVerifier::default();
        let mut accepts = 0;
        for t in 0..trials {
            let note = notes[t % notes.len()];
            let other = notes[(t + 1) % notes.len()];
            let v = note.verification_request();
            let Ok(r) = verifier.issue_challenge(store, &v, &mut self.attack_rng) else {
                continue;
            };
            let proof = match t % 4 {
                0 => {
                    let mut bytes = [0u8; SIGNATURE_LEN];
                    self.attack_rng.fill_bytes(&mut bytes);
                    OwnershipProof { sig: Signature(bytes) }
                }
                1 => {
                    let mut payload = note.nonce.0.to_vec();
                    payload.extend_from_slice(&r.0);
                    OwnershipProof {
                        sig: self.adversary_keys.sign(&payload).expect("adversary key signs"),
                    }
                }
                2 => {
                    // An honest proof observed for a different challenge.
                    let mut stale = r;
                    stale.0[0] ^= 1;
                    prove_ownership(note, &stale).expect("note key signs")
                }
                _ => prove_ownership(other, &r).expect("note key signs"),
            };
            if std::ptr::eq(note, other) && t % 4 == 3 {
                continue;
            }
            if verifier.verify_ownership(store, &v, &r, &proof) {
                accepts += 1;
            }
        }
        accepts
    }

    /// Number of one-use public keys appearing in more than one on-chain
    /// commitment.
    pub fn duplicate_commitment_keys(&self) -> usize {
        let mut seen = HashSet::new();
        self.chain_commitments()
            .iter()
            .filter(|c| !seen.insert(c.request().pk))
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::tests::small;

    #[test]
    fn expectations() {
        let collude = |f| AdversaryAction::ColludeWitnesses {
            fraction: f,
            witnesses: 5,
        };
        assert_eq!(collude(0.4).expected(50.0, 60.0), Some(Verdict::Detected));
        assert_eq!(collude(0.6).expected(50.0, 60.0), Some(Verdict::Succeeded));
        let lie = |o| AdversaryAction::FalseLocationClaim { offset_m: o };
        assert_eq!(lie(500.0).expected(50.0, 60.0), Some(Verdict::Detected));
        assert_eq!(lie(20.0).expected(50.0, 60.0), None);
        assert!(AdversaryAction::FalseForceReport { multiplier: -1.0 }.validate().is_err());
    }

    #[test]
    fn action_toml_shape() {
        #[derive(Deserialize)]
        struct Wrap {
            a: AdversaryAction,
        }
        let w: Wrap = toml::from_str("a = { kind = \"collude_witnesses\", fraction = 0.4, witnesses = 5 }").unwrap();
        assert_eq!(
            w.a,
            AdversaryAction::ColludeWitnesses {
                fraction: 0.4,
                witnesses: 5
            }
        );
        assert_eq!(w.a.to_string(), "collude_witnesses(fraction=0.4,witnesses=5)");
    }

    #[test]
    fn suite_meets_expectations_on_short_run() {
        let mut sim = Simulation::new(small(12)).unwrap();
        while !sim.is_finished() {
            sim.step();
        }
        for action in AdversaryAction::suite() {
            let tally = sim.inject_repeated(&action, 6);
            assert!(tally.met(), "{action}: {tally:?}");
        }
        assert_eq!(sim.ownership_false_accepts(40), 0);
        assert_eq!(sim.duplicate_commitment_keys(), 0);
    }
}
