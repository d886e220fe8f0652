//! Proof-of-location message flow.
//!
//! Stage 1 runs between a prover and nearby witnesses: the prover broadcasts a
//! signed [`PoLRequest`], each witness that accepts it answers with a
//! [`PoLResponse`], and the prover folds the answers into a [`PoLCommitment`]
//! for the chain while keeping a private [`PoLNote`]. Stage 2 (see
//! [`OwnershipVerifier`]) lets the prover later show that it owns a commitment
//! without revealing its master identity.
//!
//! Requests carry the claimed location sealed under a per-request
//! [`LocationKey`]. The key travels to witnesses in the over-the-air
//! [`PoLAdvertisement`] only, so every signature remains checkable from
//! on-chain bytes while the chain never holds a plaintext position.

mod location;
mod verifier;

pub use location::{LocalFrame, Location, LocationKey, SealedLocation};
pub use verifier::{
    assess_endorsement, generate_summary, prove_ownership, reveal_location, ActivityEntry,
    ActivitySummary, Challenge, CommitmentLookup, EndorsementAssessment, OwnershipProof,
    OwnershipVerifier, DEFAULT_CHALLENGE_TTL_BLOCKS,
};

use std::collections::HashSet;
use std::fmt;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::crypto::{
    hash, sign, verify, CryptoError, Hash32, KeyEscrow, KeyPair, PublicKey, SecretKey, Signature,
};
use crate::wire::{put_count, put_u64, Decode, Encode, Reader, WireError};

pub const NONCE_LEN: usize = 32;
pub const MAX_REQUEST_BYTES: usize = 320;
pub const MAX_RESPONSE_BYTES: usize = 540;
pub const MAX_COMMITMENT_BYTES: usize = 9_000;
/// Maximum advertising duration: responses arriving later are ignored.
pub const DEFAULT_COLLECTION_WINDOW_MS: u64 = 1_000;

/// 128-bit service identifier prefixed to every advertisement frame.
pub const SERVICE_UUID: [u8; 16] = *b"bychain-pol-v1\0\0";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolError {
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("no witness responses collected")]
    NoWitness,
    #[error("location out of range")]
    InvalidLocation,
    #[error("commitment does not belong to this request")]
    CommitmentMismatch,
    #[error("no commitment indexed by these nonces")]
    NotFound,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Nonce(pub [u8; NONCE_LEN]);

impl Nonce {
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut bytes = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut bytes);
        Nonce(bytes)
    }
}

impl fmt::Debug for Nonce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Nonce({}..)", hex::encode(&self.0[..6]))
    }
}

impl Encode for Nonce {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }
}

impl Decode for Nonce {
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Nonce(reader.array()?))
    }
}

/// Signed location claim broadcast by a prover under a one-use key.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PoLRequest {
    pub pk: PublicKey,
    pub nonce: Nonce,
    pub location: SealedLocation,
    pub timestamp: u64,
    pub sig: Signature,
}

impl PoLRequest {
    pub const ENCODED_LEN: usize = 33 + NONCE_LEN + 8 + 8 + 64;

    fn payload(pk: &PublicKey, nonce: &Nonce, location: &SealedLocation, t: u64) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::ENCODED_LEN - 64);
        pk.encode_to(&mut out);
        nonce.encode_to(&mut out);
        location.encode_to(&mut out);
        put_u64(&mut out, t);
        out
    }

    /// Bytes covered by the prover signature.
    pub fn signing_payload(&self) -> Vec<u8> {
        Self::payload(&self.pk, &self.nonce, &self.location, self.timestamp)
    }

    pub fn verify_signature(&self) -> bool {
        verify(&self.pk, &self.signing_payload(), &self.sig)
    }
}

impl Encode for PoLRequest {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.pk.encode_to(out);
        self.nonce.encode_to(out);
        self.location.encode_to(out);
        put_u64(out, self.timestamp);
        self.sig.encode_to(out);
    }
}

impl Decode for PoLRequest {
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(PoLRequest {
            pk: PublicKey::decode_from(reader)?,
            nonce: Nonce::decode_from(reader)?,
            location: SealedLocation::decode_from(reader)?,
            timestamp: reader.u64()?,
            sig: Signature::decode_from(reader)?,
        })
    }
}

/// Over-the-air frame: service UUID, the request, and the key that lets a
/// witness open the sealed location for its distance check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoLAdvertisement {
    pub request: PoLRequest,
    pub location_key: LocationKey,
}

impl PoLAdvertisement {
    pub fn claimed_location(&self) -> Result<Location, PolError> {
        self.location_key.open(&self.request.location)
    }
}

impl Encode for PoLAdvertisement {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&SERVICE_UUID);
        self.request.encode_to(out);
        self.location_key.encode_to(out);
    }
}

impl Decode for PoLAdvertisement {
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, WireError> {
        if reader.array::<16>()? != SERVICE_UUID {
            return Err(WireError::InvalidValue("service uuid"));
        }
        Ok(PoLAdvertisement {
            request: PoLRequest::decode_from(reader)?,
            location_key: LocationKey::decode_from(reader)?,
        })
    }
}

/// Witness public key followed by its never-repeating response counter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WitnessNonce {
    pub witness: PublicKey,
    pub counter: u64,
}

impl WitnessNonce {
    pub const ENCODED_LEN: usize = 33 + 8;
}

impl Encode for WitnessNonce {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.witness.encode_to(out);
        put_u64(out, self.counter);
    }
}

impl Decode for WitnessNonce {
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(WitnessNonce {
            witness: PublicKey::decode_from(reader)?,
            counter: reader.u64()?,
        })
    }
}

/// A witness endorsement of one request. The request bytes are copied
/// verbatim so the prover signature stays verifiable downstream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoLResponse {
    pub request: PoLRequest,
    pub nonce_w: WitnessNonce,
    pub sig_w: Signature,
}

fn endorsement_payload(request: &PoLRequest, nonce_w: &WitnessNonce) -> Vec<u8> {
    let mut out = Vec::with_capacity(PoLRequest::ENCODED_LEN + WitnessNonce::ENCODED_LEN);
    request.encode_to(&mut out);
    nonce_w.encode_to(&mut out);
    out
}

impl PoLResponse {
    pub fn signing_payload(&self) -> Vec<u8> {
        endorsement_payload(&self.request, &self.nonce_w)
    }

    /// Checks `sig_w` under the witness key carried in `nonce_w`.
    pub fn verify_witness(&self) -> bool {
        verify(&self.nonce_w.witness, &self.signing_payload(), &self.sig_w)
    }
}

impl Encode for PoLResponse {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.request.encode_to(out);
        self.nonce_w.encode_to(out);
        self.sig_w.encode_to(out);
    }
}

impl Decode for PoLResponse {
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(PoLResponse {
            request: PoLRequest::decode_from(reader)?,
            nonce_w: WitnessNonce::decode_from(reader)?,
            sig_w: Signature::decode_from(reader)?,
        })
    }
}

/// `(nonce_w, sig_w)` half of a response; the request half is shared.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Endorsement {
    pub nonce_w: WitnessNonce,
    pub sig_w: Signature,
}

impl Encode for Endorsement {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.nonce_w.encode_to(out);
        self.sig_w.encode_to(out);
    }
}

impl Decode for Endorsement {
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Endorsement {
            nonce_w: WitnessNonce::decode_from(reader)?,
            sig_w: Signature::decode_from(reader)?,
        })
    }
}

/// The combined responses to one request, as stored on-chain.
///
/// Wire layout: request, `u16` endorsement count, endorsements. Every response
/// embeds the same request, so it is written once.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoLCommitment {
    request: PoLRequest,
    endorsements: Vec<Endorsement>,
}

impl PoLCommitment {
    /// Largest endorsement count that fits the commitment byte cap.
    pub const MAX_WITNESSES: usize =
        (MAX_COMMITMENT_BYTES - PoLRequest::ENCODED_LEN - 2) / (WitnessNonce::ENCODED_LEN + 64);

    pub fn request(&self) -> &PoLRequest {
        &self.request
    }

    pub fn endorsements(&self) -> &[Endorsement] {
        &self.endorsements
    }

    /// Witness count M.
    pub fn witness_count(&self) -> usize {
        self.endorsements.len()
    }

    pub fn responses(&self) -> impl Iterator<Item = PoLResponse> + '_ {
        self.endorsements.iter().map(|e| PoLResponse {
            request: self.request.clone(),
            nonce_w: e.nonce_w,
            sig_w: e.sig_w,
        })
    }

    pub fn witness_nonces(&self) -> Vec<WitnessNonce> {
        self.endorsements.iter().map(|e| e.nonce_w).collect()
    }

    /// Lookup key: hash of the witness nonces concatenated in wire order.
    pub fn index_key(&self) -> Hash32 {
        nonce_index_key(self.endorsements.iter().map(|e| &e.nonce_w))
    }

    /// Re-checks the prover signature, every witness signature, and witness
    /// distinctness.
    pub fn verify(&self) -> bool {
        if self.endorsements.is_empty() || !self.request.verify_signature() {
            return false;
        }
        let mut seen = HashSet::new();
        self.endorsements.iter().all(|e| {
            seen.insert(e.nonce_w.witness)
                && verify(
                    &e.nonce_w.witness,
                    &endorsement_payload(&self.request, &e.nonce_w),
                    &e.sig_w,
                )
        })
    }
}

impl Encode for PoLCommitment {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.request.encode_to(out);
        put_count(out, self.endorsements.len());
        for e in &self.endorsements {
            e.encode_to(out);
        }
    }

    fn encoded_len(&self) -> usize {
        PoLRequest::ENCODED_LEN + 2 + self.endorsements.len() * (WitnessNonce::ENCODED_LEN + 64)
    }
}

impl Decode for PoLCommitment {
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, WireError> {
        let request = PoLRequest::decode_from(reader)?;
        let endorsements: Vec<Endorsement> = reader.seq()?;
        if endorsements.is_empty() {
            return Err(WireError::InvalidValue("commitment without witnesses"));
        }
        if endorsements.len() > Self::MAX_WITNESSES {
            return Err(WireError::TooLong(endorsements.len()));
        }
        Ok(PoLCommitment {
            request,
            endorsements,
        })
    }
}

fn nonce_index_key<'a>(nonces: impl Iterator<Item = &'a WitnessNonce>) -> Hash32 {
    let mut bytes = Vec::new();
    for n in nonces {
        n.encode_to(&mut bytes);
    }
    hash(&bytes)
}

/// Prover-side request to open a stored commitment, naming it by its witness
/// nonces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerificationRequest {
    pub witness_nonces: Vec<WitnessNonce>,
}

impl VerificationRequest {
    pub fn index_key(&self) -> Hash32 {
        nonce_index_key(self.witness_nonces.iter())
    }
}

impl Encode for VerificationRequest {
    fn encode_to(&self, out: &mut Vec<u8>) {
        put_count(out, self.witness_nonces.len());
        for n in &self.witness_nonces {
            n.encode_to(out);
        }
    }
}

impl Decode for VerificationRequest {
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(VerificationRequest {
            witness_nonces: reader.seq()?,
        })
    }
}

/// Local-only record that proves ownership of one commitment. Deliberately
/// has no wire encoding.
#[derive(Clone)]
pub struct PoLNote {
    pub secret: SecretKey,
    pub public: PublicKey,
    pub nonce: Nonce,
    pub timestamp: u64,
    pub location: Location,
    pub location_key: LocationKey,
    pub witness_nonces: Vec<WitnessNonce>,
}

impl PoLNote {
    pub fn verification_request(&self) -> VerificationRequest {
        VerificationRequest {
            witness_nonces: self.witness_nonces.clone(),
        }
    }
}

impl fmt::Debug for PoLNote {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PoLNote")
            .field("public", &self.public)
            .field("timestamp", &self.timestamp)
            .field("witnesses", &self.witness_nonces.len())
            .finish_non_exhaustive()
    }
}

/// State held between broadcasting a request and storing its note.
#[derive(Clone)]
pub struct PendingProof {
    pub request: PoLRequest,
    secret: SecretKey,
    location: Location,
    location_key: LocationKey,
}

impl PendingProof {
    pub fn location(&self) -> Location {
        self.location
    }
}

impl fmt::Debug for PendingProof {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PendingProof")
            .field("request", &self.request)
            .finish_non_exhaustive()
    }
}

/// Signs a request with the escrow's current one-use key. The cursor is left
/// in place until [`finalize_note`], so a broadcast nobody answers does not
/// burn a key.
pub fn build_pol_request<R: RngCore + CryptoRng>(
    escrow: &mut KeyEscrow,
    location: Location,
    timestamp: u64,
    rng: &mut R,
) -> Result<(PoLAdvertisement, PendingProof), PolError> {
    let keys = escrow.current()?.clone();
    let nonce = Nonce::random(rng);
    let location_key = LocationKey::derive(&keys.secret, &nonce);
    let sealed = location_key.seal(&location);
    let payload = PoLRequest::payload(&keys.public, &nonce, &sealed, timestamp);
    let request = PoLRequest {
        pk: keys.public,
        nonce,
        location: sealed,
        timestamp,
        sig: sign(&keys.secret, &payload)?,
    };
    let advert = PoLAdvertisement {
        request: request.clone(),
        location_key: location_key.clone(),
    };
    Ok((
        advert,
        PendingProof {
            request,
            secret: keys.secret,
            location,
            location_key,
        },
    ))
}

/// Witness acceptance rules.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WitnessPolicy {
    /// Communication radius R in meters.
    pub radius_m: f64,
    /// Allowed distance beyond R, as a fraction of R.
    pub slack_fraction: f64,
    pub freshness_s: u64,
}

impl WitnessPolicy {
    pub fn new(radius_m: f64) -> Self {
        WitnessPolicy {
            radius_m,
            slack_fraction: 0.2,
            freshness_s: 10,
        }
    }

    pub fn max_distance_m(&self) -> f64 {
        self.radius_m * (1.0 + self.slack_fraction)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Error)]
pub enum Rejection {
    #[error("request signature invalid")]
    BadSignature,
    #[error("sealed location does not open to a valid position")]
    BadLocation,
    #[error("claimed location {distance_m:.1} m away exceeds range")]
    Distance { distance_m: f64 },
    #[error("request timestamp outside freshness window")]
    Stale,
}

/// Witness-side admission check for a received advertisement.
pub fn witness_validate(
    advert: &PoLAdvertisement,
    witness_pos: &Location,
    policy: &WitnessPolicy,
    now: u64,
) -> Result<(), Rejection> {
    if !advert.request.verify_signature() {
        return Err(Rejection::BadSignature);
    }
    let claimed = advert
        .claimed_location()
        .map_err(|_| Rejection::BadLocation)?;
    let distance_m = claimed.distance_m(witness_pos);
    if distance_m > policy.max_distance_m() {
        return Err(Rejection::Distance { distance_m });
    }
    if now.abs_diff(advert.request.timestamp) > policy.freshness_s {
        return Err(Rejection::Stale);
    }
    Ok(())
}

/// Signs a response, bumping `counter` exactly once.
pub fn build_pol_response(
    request: &PoLRequest,
    keys: &KeyPair,
    counter: &mut u64,
) -> Result<PoLResponse, PolError> {
    *counter += 1;
    let nonce_w = WitnessNonce {
        witness: keys.public,
        counter: *counter,
    };
    let sig_w = keys.sign(&endorsement_payload(request, &nonce_w))?;
    Ok(PoLResponse {
        request: request.clone(),
        nonce_w,
        sig_w,
    })
}

/// A witness key with its response counter.
#[derive(Clone, Debug)]
pub struct WitnessSigner {
    keys: KeyPair,
    counter: u64,
}

impl WitnessSigner {
    pub fn new(keys: KeyPair) -> Self {
        Self::with_counter(keys, 0)
    }

    /// Resumes a signer whose last issued counter was `counter`.
    pub fn with_counter(keys: KeyPair, counter: u64) -> Self {
        WitnessSigner { keys, counter }
    }

    pub fn public(&self) -> PublicKey {
        self.keys.public
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn keys(&self) -> &KeyPair {
        &self.keys
    }

    pub fn respond(&mut self, request: &PoLRequest) -> Result<PoLResponse, PolError> {
        build_pol_response(request, &self.keys, &mut self.counter)
    }
}

/// A response together with its arrival time relative to the broadcast.
#[derive(Clone, Debug)]
pub struct CollectedResponse {
    pub response: PoLResponse,
    pub arrival_ms: u64,
}

/// Folds collected responses into a commitment for `request`.
///
/// Responses that arrive after the window, endorse a different request, or
/// fail signature checks are dropped; repeated witnesses keep their first
/// response. If more witnesses answered than fit the byte cap, the earliest
/// are kept.
pub fn combine_responses(
    request: &PoLRequest,
    collected: &[CollectedResponse],
    window_ms: u64,
) -> Result<PoLCommitment, PolError> {
    let mut ordered: Vec<&CollectedResponse> = collected
        .iter()
        .filter(|c| c.arrival_ms <= window_ms && &c.response.request == request)
        .collect();
    ordered.sort_by_key(|c| c.arrival_ms);
    let mut seen = HashSet::new();
    let endorsements: Vec<Endorsement> = ordered
        .into_iter()
        .filter(|c| c.response.verify_witness())
        .filter(|c| seen.insert(c.response.nonce_w.witness))
        .take(PoLCommitment::MAX_WITNESSES)
        .map(|c| Endorsement {
            nonce_w: c.response.nonce_w,
            sig_w: c.response.sig_w,
        })
        .collect();
    if endorsements.is_empty() {
        return Err(PolError::NoWitness);
    }
    Ok(PoLCommitment {
        request: request.clone(),
        endorsements,
    })
}

/// Stores the note for a built commitment and retires the one-use key.
pub fn finalize_note(
    escrow: &mut KeyEscrow,
    pending: PendingProof,
    commitment: &PoLCommitment,
) -> Result<PoLNote, PolError> {
    if commitment.request != pending.request {
        return Err(PolError::CommitmentMismatch);
    }
    if escrow.current()?.public != pending.request.pk {
        return Err(PolError::CommitmentMismatch);
    }
    escrow.advance()?;
    Ok(PoLNote {
        public: pending.request.pk,
        secret: pending.secret,
        nonce: pending.request.nonce,
        timestamp: pending.request.timestamp,
        location: pending.location,
        location_key: pending.location_key,
        witness_nonces: commitment.witness_nonces(),
    })
}
