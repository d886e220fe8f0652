use thiserror::Error;

use crate::crypto::{CryptoError, Hash32, KeyPair};
use crate::wire::Encode;

use super::store::{check_tx, Claims};
use super::{Block, ChainStore, IncentiveAllocation, Operation, Transaction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TxRejection {
    #[error("bad signature")]
    BadSignature,
    #[error("expired")]
    Expired,
    #[error("replay of committed or pending data")]
    Replay,
    #[error("oversize")]
    Oversize,
    #[error("malformed or unauthorized operation")]
    BadOperation,
}

/// Pending transactions in arrival order.
#[derive(Clone, Debug, Default)]
pub struct Mempool {
    txs: Vec<Transaction>,
    claims: Claims,
}

impl Mempool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.txs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txs.is_empty()
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.txs
    }

    /// Admits `tx` if it is signed, unexpired at the current tip, and commits
    /// nothing already on the tip chain or in the pool. Allocation operations
    /// are reserved for block producers.
    pub fn submit(&mut self, store: &ChainStore, tx: Transaction) -> Result<Hash32, TxRejection> {
        if tx
            .operations
            .iter()
            .any(|op| matches!(op, Operation::IncentiveAllocation(_)))
        {
            return Err(TxRejection::BadOperation);
        }
        check_tx(&tx, store.tip_height(), store.config())?;
        if !self.claims.try_claim(&tx, store.index()) {
            return Err(TxRejection::Replay);
        }
        let id = tx.id();
        self.txs.push(tx);
        Ok(id)
    }

    /// Drops transactions that the tip chain now includes, that can no longer
    /// be included, or that conflict with it.
    pub fn prune(&mut self, store: &ChainStore) {
        let next = store.tip_height() + 1;
        let mut claims = Claims::default();
        self.txs
            .retain(|tx| next <= tx.expiration && claims.try_claim(tx, store.index()));
        self.claims = claims;
    }

    /// Resubmits transactions from abandoned blocks, silently dropping any the
    /// new tip no longer admits.
    pub fn readmit(&mut self, store: &ChainStore, txs: Vec<Transaction>) {
        for tx in txs {
            let _ = self.submit(store, tx);
        }
    }

    /// Builds a signed block on the current tip: the allocation first (if
    /// any), then pooled transactions in arrival order while they fit.
    /// Included transactions stay pooled until [`Mempool::prune`] runs after
    /// the block is appended.
    pub fn assemble_block(
        &self,
        store: &ChainStore,
        producer: &KeyPair,
        timestamp: u64,
        allocation: Option<IncentiveAllocation>,
    ) -> Result<Block, CryptoError> {
        let height = store.tip_height() + 1;
        let cap = store.config().max_block_bytes;
        let mut size = Block::EMPTY_LEN;
        let mut txs = Vec::new();
        if let Some(alloc) = allocation {
            let tx = Transaction::new(vec![Operation::IncentiveAllocation(alloc)], height, producer)?;
            size += tx.encoded_len();
            txs.push(tx);
        }
        let mut claims = Claims::default();
        for tx in &self.txs {
            if height > tx.expiration {
                continue;
            }
            let len = tx.encoded_len();
            if size + len > cap || txs.len() >= u16::MAX as usize {
                continue;
            }
            if !claims.try_claim(tx, store.index()) {
                continue;
            }
            size += len;
            txs.push(tx.clone());
        }
        Block::sealed(height, store.tip(), timestamp, txs, producer)
    }
}
