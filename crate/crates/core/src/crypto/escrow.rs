use std::collections::HashSet;

use zeroize::Zeroize;

use super::{derive_keypair, CryptoError, KeyPair, PublicKey};

/// Number of one-use key pairs derived when an escrow is created.
pub const DEFAULT_ESCROW_POOL: usize = 128;

const MASTER_LABEL: &[u8] = b"bychain/escrow/master";
const POOL_LABEL: &[u8] = b"bychain/escrow/pool";

/// A prover's master identity plus an ordered pool of one-use key pairs.
///
/// Each proof-of-location round signs with a fresh pair, so on-chain records
/// never share a public key with each other or with the master identity.
/// Pairs below `cursor` are spent: their secrets are zeroed and they are never
/// handed out again.
///
/// Single writer: callers serialize access to a given escrow.
pub struct KeyEscrow {
    master: KeyPair,
    seed: Option<[u8; 32]>,
    pool: Vec<KeyPair>,
    issued: HashSet<PublicKey>,
    cursor: usize,
    next_index: u64,
}

impl KeyEscrow {
    /// Derives the master pair and a default-sized pool from `seed`.
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self::with_pool_size(seed, DEFAULT_ESCROW_POOL)
    }

    pub fn with_pool_size(seed: [u8; 32], pool_size: usize) -> Self {
        let mut escrow = KeyEscrow {
            master: derive_keypair(&seed, MASTER_LABEL, 0),
            seed: Some(seed),
            pool: Vec::with_capacity(pool_size),
            issued: HashSet::new(),
            cursor: 0,
            next_index: 0,
        };
        escrow.issued.insert(escrow.master.public);
        escrow.extend(pool_size);
        escrow
    }

    /// A fixed pool with no seed to extend it from. Duplicate public keys
    /// (including the master's) are dropped.
    pub fn from_pool(master: KeyPair, pool: Vec<KeyPair>) -> Self {
        let mut issued = HashSet::new();
        issued.insert(master.public);
        let pool = pool
            .into_iter()
            .filter(|kp| issued.insert(kp.public))
            .collect();
        KeyEscrow {
            master,
            seed: None,
            pool,
            issued,
            cursor: 0,
            next_index: 0,
        }
    }

    fn extend(&mut self, count: usize) {
        let Some(seed) = self.seed else { return };
        let target = self.pool.len() + count;
        while self.pool.len() < target {
            let kp = derive_keypair(&seed, POOL_LABEL, self.next_index);
            self.next_index += 1;
            if self.issued.insert(kp.public) {
                self.pool.push(kp);
            }
        }
    }

    pub fn master_public(&self) -> PublicKey {
        self.master.public
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn pool_len(&self) -> usize {
        self.pool.len()
    }

    /// The next unused pair, extending the pool from the seed if needed.
    /// Does not advance the cursor.
    pub fn current(&mut self) -> Result<&KeyPair, CryptoError> {
        if self.cursor >= self.pool.len() {
            if self.seed.is_none() {
                return Err(CryptoError::EscrowExhausted);
            }
            self.extend(DEFAULT_ESCROW_POOL);
        }
        Ok(&self.pool[self.cursor])
    }

    /// Marks the current pair spent and zeroes its secret.
    pub fn advance(&mut self) -> Result<(), CryptoError> {
        self.current()?;
        let spent = &mut self.pool[self.cursor];
        spent.secret.zeroize();
        self.cursor += 1;
        Ok(())
    }

    /// Returns `pool[cursor]` and advances the cursor by one.
    pub fn escrow_next(&mut self) -> Result<KeyPair, CryptoError> {
        let pair = self.current()?.clone();
        self.advance()?;
        Ok(pair)
    }

    /// Public keys of every pair handed out so far, in issue order.
    pub fn spent_public_keys(&self) -> impl Iterator<Item = &PublicKey> {
        self.pool[..self.cursor].iter().map(|kp| &kp.public)
    }
}

impl std::fmt::Debug for KeyEscrow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyEscrow")
            .field("master", &self.master.public)
            .field("cursor", &self.cursor)
            .field("pool_len", &self.pool.len())
            .finish()
    }
}
