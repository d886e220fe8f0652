//! Signing keys, hashing and address derivation for provers, witnesses and
//! block producers.
//!
//! Signatures are ECDSA over secp256k1 with RFC 6979 nonces, so signing is a
//! pure function of `(secret, message)` and runs are reproducible across
//! platforms. Every signature covers `SHA-256(message)`.

mod escrow;

pub use escrow::{KeyEscrow, DEFAULT_ESCROW_POOL};

use std::fmt;

use k256::ecdsa::signature::{Signer, Verifier};
use k256::ecdsa::{SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;
use zeroize::{Zeroize, ZeroizeOnDrop};

use crate::wire::{Decode, Encode, Reader, WireError};

pub const PUBLIC_KEY_LEN: usize = 33;
pub const SIGNATURE_LEN: usize = 64;
pub const ADDRESS_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("malformed secret key (corrupted escrow entry)")]
    MalformedSecretKey,
    #[error("key escrow exhausted and no master seed to extend it")]
    EscrowExhausted,
}

/// SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Hash32(pub [u8; 32]);

impl Hash32 {
    pub const ZERO: Hash32 = Hash32([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash32({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Encode for Hash32 {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }
}

impl Decode for Hash32 {
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Hash32(reader.array()?))
    }
}

/// SHA-256 of `data`.
pub fn hash(data: &[u8]) -> Hash32 {
    Hash32(Sha256::digest(data).into())
}

/// SHA-256 over the concatenation of `parts`.
pub fn hash_parts(parts: &[&[u8]]) -> Hash32 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    Hash32(hasher.finalize().into())
}

/// Compressed SEC1 point encoding (33 bytes).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey(pub [u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    /// Placeholder producer key carried by the genesis block.
    pub const NONE: PublicKey = PublicKey([0u8; PUBLIC_KEY_LEN]);

    pub fn as_bytes(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.0
    }

    pub fn address(&self) -> Address {
        Address::from_public_key(self)
    }

    fn verifying_key(&self) -> Option<VerifyingKey> {
        VerifyingKey::from_sec1_bytes(&self.0).ok()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", &hex::encode(self.0)[..16])
    }
}

impl Encode for PublicKey {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }
}

impl Decode for PublicKey {
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(PublicKey(reader.array()?))
    }
}

/// Fixed 64-byte `r || s` signature encoding.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl Signature {
    pub const NONE: Signature = Signature([0u8; SIGNATURE_LEN]);
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", &hex::encode(self.0)[..16])
    }
}

impl Encode for Signature {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }
}

impl Decode for Signature {
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Signature(reader.array()?))
    }
}

/// Raw 32-byte signing scalar. Zeroed on drop and never encoded by any
/// protocol message.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct SecretKey([u8; 32]);

impl SecretKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn expose(&self) -> &[u8; 32] {
        &self.0
    }

    fn signing_key(&self) -> Result<SigningKey, CryptoError> {
        SigningKey::from_slice(&self.0).map_err(|_| CryptoError::MalformedSecretKey)
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

#[derive(Clone, Debug)]
pub struct KeyPair {
    pub secret: SecretKey,
    pub public: PublicKey,
}

impl KeyPair {
    fn from_signing_key(sk: &SigningKey) -> Self {
        let point = sk.verifying_key().to_encoded_point(true);
        let mut public = [0u8; PUBLIC_KEY_LEN];
        public.copy_from_slice(point.as_bytes());
        KeyPair {
            secret: SecretKey(sk.to_bytes().into()),
            public: PublicKey(public),
        }
    }

    /// Rebuilds the pair from a secret scalar.
    pub fn from_secret(secret: &SecretKey) -> Result<Self, CryptoError> {
        Ok(Self::from_signing_key(&secret.signing_key()?))
    }

    pub fn sign(&self, message: &[u8]) -> Result<Signature, CryptoError> {
        sign(&self.secret, message)
    }
}

/// Draws a fresh secp256k1 key pair from `rng`.
pub fn generate_keypair<R: RngCore + CryptoRng>(rng: &mut R) -> KeyPair {
    KeyPair::from_signing_key(&SigningKey::random(rng))
}

/// Deterministic keyed derivation: `SHA-256(label || seed || index || ctr)`,
/// retrying with the next counter on the (negligible) chance the digest is
/// not a valid scalar.
pub fn derive_keypair(seed: &[u8; 32], label: &[u8], index: u64) -> KeyPair {
    for ctr in 0u32.. {
        let digest = hash_parts(&[label, seed, &index.to_be_bytes(), &ctr.to_be_bytes()]);
        if let Ok(sk) = SigningKey::from_slice(digest.as_bytes()) {
            return KeyPair::from_signing_key(&sk);
        }
    }
    unreachable!("scalar derivation counter exhausted")
}

/// ECDSA signature over `SHA-256(message)`.
pub fn sign(sk: &SecretKey, message: &[u8]) -> Result<Signature, CryptoError> {
    let signing_key = sk.signing_key()?;
    let sig: k256::ecdsa::Signature = signing_key.sign(message);
    Ok(Signature(sig.to_bytes().into()))
}

/// Returns `false` for any malformed key or signature rather than erroring,
/// so adversarial bytes can never abort a validator.
pub fn verify(pk: &PublicKey, message: &[u8], sig: &Signature) -> bool {
    let Some(vk) = pk.verifying_key() else {
        return false;
    };
    let Ok(sig) = k256::ecdsa::Signature::from_slice(&sig.0) else {
        return false;
    };
    vk.verify(message, &sig).is_ok()
}

/// 160-bit account identifier: the first 20 bytes of
/// `SHA-256(SHA-256(public_key))`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address(pub [u8; ADDRESS_LEN]);

impl Address {
    pub fn from_public_key(pk: &PublicKey) -> Self {
        let inner = hash(pk.as_bytes());
        let outer = hash(inner.as_bytes());
        let mut digest = [0u8; ADDRESS_LEN];
        digest.copy_from_slice(&outer.0[..ADDRESS_LEN]);
        Address(digest)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.to_hex())
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Encode for Address {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }
}

impl Decode for Address {
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Address(reader.array()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    #[test]
    fn sha256_empty_vector() {
        assert_eq!(
            hash(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            hash(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn hash_parts_matches_concatenation() {
        assert_eq!(hash_parts(&[b"ab", b"", b"c"]), hash(b"abc"));
    }

    #[test]
    fn keypairs_distinct_and_reproducible() {
        let mut a = rng(11);
        let k1 = generate_keypair(&mut a);
        let k2 = generate_keypair(&mut a);
        assert_ne!(k1.public, k2.public);

        let mut b = rng(11);
        assert_eq!(generate_keypair(&mut b).public, k1.public);
        assert_eq!(generate_keypair(&mut b).public, k2.public);
    }

    #[test]
    fn public_key_is_compressed_sec1() {
        let k = generate_keypair(&mut rng(3));
        assert_eq!(k.public.as_bytes().len(), 33);
        assert!(matches!(k.public.0[0], 0x02 | 0x03));
    }

    #[test]
    fn sign_verify_roundtrip_and_rejections() {
        let mut r = rng(5);
        let k = generate_keypair(&mut r);
        let other = generate_keypair(&mut r);
        let msg = b"proof of location".to_vec();
        let sig = k.sign(&msg).unwrap();
        assert!(verify(&k.public, &msg, &sig));

        let mut flipped = msg.clone();
        flipped[3] ^= 0x01;
        assert!(!verify(&k.public, &flipped, &sig));
        assert!(!verify(&other.public, &msg, &sig));
    }

    #[test]
    fn signing_is_deterministic() {
        let k = generate_keypair(&mut rng(8));
        assert_eq!(k.sign(b"m").unwrap(), k.sign(b"m").unwrap());
    }

    #[test]
    fn malformed_inputs_verify_false() {
        let k = generate_keypair(&mut rng(9));
        let sig = k.sign(b"m").unwrap();
        assert!(!verify(&PublicKey::NONE, b"m", &sig));
        assert!(!verify(&PublicKey([0xff; 33]), b"m", &sig));
        assert!(!verify(&k.public, b"m", &Signature::NONE));
        assert!(!verify(&k.public, b"m", &Signature([0xff; 64])));
    }

    #[test]
    fn malformed_secret_is_an_error() {
        assert_eq!(
            sign(&SecretKey::from_bytes([0u8; 32]), b"m"),
            Err(CryptoError::MalformedSecretKey)
        );
        assert_eq!(
            sign(&SecretKey::from_bytes([0xff; 32]), b"m"),
            Err(CryptoError::MalformedSecretKey)
        );
    }

    #[test]
    fn address_is_twenty_bytes_and_pure() {
        let k = generate_keypair(&mut rng(1));
        let a = Address::from_public_key(&k.public);
        assert_eq!(a, k.public.address());
        assert_eq!(a.0.len(), 20);
        assert_eq!(&a.0[..], &hash(hash(&k.public.0).as_bytes()).0[..20]);
    }

    #[test]
    fn secret_debug_is_redacted() {
        let k = generate_keypair(&mut rng(1));
        assert_eq!(format!("{:?}", k.secret), "SecretKey(..)");
    }

    #[test]
    fn sha256_distinct_on_random_pairs() {
        use rand::Rng;
        use std::collections::HashSet;
        let mut r = rng(77);
        let mut seen = HashSet::new();
        let mut inputs = HashSet::new();
        for _ in 0..10_000 {
            let len = r.gen_range(0..48);
            let data: Vec<u8> = (0..len).map(|_| r.gen()).collect();
            if inputs.insert(data.clone()) {
                assert!(seen.insert(hash(&data)));
            }
        }
    }
}
