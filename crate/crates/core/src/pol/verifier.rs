//! Stage 2: challenge-response ownership checks and activity summaries.

use std::collections::HashMap;

use rand::{CryptoRng, RngCore};

use crate::crypto::{sign, verify, Hash32, Signature};
use crate::wire::{Decode, Encode, Reader, WireError};

use super::{Location, LocationKey, PoLCommitment, PoLNote, PolError, VerificationRequest};

/// Pending challenges older than this many blocks are discarded.
pub const DEFAULT_CHALLENGE_TTL_BLOCKS: u64 = 1;

/// Read access to committed proofs on the current best chain.
pub trait CommitmentLookup {
    fn find_commitment(&self, index_key: &Hash32) -> Option<PoLCommitment>;
    fn height(&self) -> u64;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Challenge(pub [u8; 32]);

/// Prover signature over `nonce_p || r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OwnershipProof {
    pub sig: Signature,
}

impl Encode for OwnershipProof {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.sig.encode_to(out);
    }
}

impl Decode for OwnershipProof {
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(OwnershipProof {
            sig: Signature::decode_from(reader)?,
        })
    }
}

fn proof_payload(nonce_p: &[u8; 32], r: &Challenge) -> [u8; 64] {
    let mut out = [0u8; 64];
    out[..32].copy_from_slice(nonce_p);
    out[32..].copy_from_slice(&r.0);
    out
}

pub fn prove_ownership(note: &PoLNote, r: &Challenge) -> Result<OwnershipProof, PolError> {
    Ok(OwnershipProof {
        sig: sign(&note.secret, &proof_payload(&note.nonce.0, r))?,
    })
}

#[derive(Clone, Debug)]
struct Pending {
    index_key: Hash32,
    issued_at: u64,
}

/// Verifier contract state: the table of outstanding challenges.
#[derive(Debug)]
pub struct OwnershipVerifier {
    pending: HashMap<Challenge, Pending>,
    ttl_blocks: u64,
}

impl Default for OwnershipVerifier {
    fn default() -> Self {
        Self::new(DEFAULT_CHALLENGE_TTL_BLOCKS)
    }
}

impl OwnershipVerifier {
    pub fn new(ttl_blocks: u64) -> Self {
        OwnershipVerifier {
            pending: HashMap::new(),
            ttl_blocks,
        }
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    fn expire(&mut self, height: u64) {
        let ttl = self.ttl_blocks;
        self.pending
            .retain(|_, p| height.saturating_sub(p.issued_at) <= ttl);
    }

    /// Returns a fresh random challenge if `v` names a commitment on the
    /// best chain.
    pub fn issue_challenge<C: CommitmentLookup, R: RngCore + CryptoRng>(
        &mut self,
        chain: &C,
        v: &VerificationRequest,
        rng: &mut R,
    ) -> Result<Challenge, PolError> {
        let height = chain.height();
        self.expire(height);
        let index_key = v.index_key();
        if chain.find_commitment(&index_key).is_none() {
            return Err(PolError::NotFound);
        }
        let r = loop {
            let mut bytes = [0u8; 32];
            rng.fill_bytes(&mut bytes);
            let r = Challenge(bytes);
            if !self.pending.contains_key(&r) {
                break r;
            }
        };
        self.pending.insert(
            r,
            Pending {
                index_key,
                issued_at: height,
            },
        );
        Ok(r)
    }

    /// Accepts iff the challenge is outstanding for `v`, the proof verifies
    /// under the commitment's one-use key, and the stored request signature
    /// still verifies. The challenge is consumed whatever the outcome.
    pub fn verify_ownership<C: CommitmentLookup>(
        &mut self,
        chain: &C,
        v: &VerificationRequest,
        r: &Challenge,
        proof: &OwnershipProof,
    ) -> bool {
        let Some(pending) = self.pending.remove(r) else {
            return false;
        };
        if chain.height().saturating_sub(pending.issued_at) > self.ttl_blocks {
            return false;
        }
        let index_key = v.index_key();
        if index_key != pending.index_key {
            return false;
        }
        let Some(commitment) = chain.find_commitment(&index_key) else {
            return false;
        };
        let request = commitment.request();
        verify(
            &request.pk,
            &proof_payload(&request.nonce.0, r),
            &proof.sig,
        ) && request.verify_signature()
    }
}

/// Opens the on-chain location of a verified commitment.
pub fn reveal_location(commitment: &PoLCommitment, key: &LocationKey) -> Result<Location, PolError> {
    key.open(&commitment.request().location)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivityEntry {
    pub timestamp: u64,
    pub location: Location,
    /// Number of distinct witnesses that endorsed the proof.
    pub trust_level: u32,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActivitySummary {
    pub entries: Vec<ActivityEntry>,
}

/// Builds a time-ordered summary from ownership-verified commitments and their
/// revealed locations.
pub fn generate_summary(verified: &[(PoLCommitment, Location)]) -> ActivitySummary {
    let mut entries: Vec<ActivityEntry> = verified
        .iter()
        .map(|(com, location)| ActivityEntry {
            timestamp: com.request().timestamp,
            location: *location,
            trust_level: com.witness_count() as u32,
        })
        .collect();
    entries.sort_by_key(|e| e.timestamp);
    ActivitySummary { entries }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EndorsementAssessment {
    /// Honest witnesses hold a strict majority.
    Safe,
    Compromised,
}

/// Collusion bound for a commitment of `witnesses` endorsements of which
/// `colluding` are adversarial.
pub fn assess_endorsement(witnesses: usize, colluding: usize) -> EndorsementAssessment {
    let honest = witnesses.saturating_sub(colluding);
    if 2 * honest > witnesses {
        EndorsementAssessment::Safe
    } else {
        EndorsementAssessment::Compromised
    }
}
