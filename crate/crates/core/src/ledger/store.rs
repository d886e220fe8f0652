use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::crypto::{hash_parts, Hash32, PublicKey, Signature};
use crate::pol::{CommitmentLookup, PoLCommitment, WitnessNonce};
use crate::wire::Encode;

use super::mempool::TxRejection;
use super::{merkle_root, Block, BlockHeader, IncentiveAllocation, Operation, Transaction, MAX_BLOCK_BYTES};

#[derive(Clone, Debug, PartialEq)]
pub struct ChainConfig {
    pub genesis_timestamp: u64,
    pub block_interval_s: u64,
    /// Default expiration offset for new transactions, in blocks.
    pub tx_lifetime_blocks: u64,
    pub max_block_bytes: usize,
    /// Blocks buried this deep under the tip are final.
    pub finality_depth: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            genesis_timestamp: 1_504_613_700,
            block_interval_s: 3,
            tx_lifetime_blocks: 100,
            max_block_bytes: MAX_BLOCK_BYTES,
            finality_depth: 5,
        }
    }
}

impl ChainConfig {
    fn digest(&self) -> Hash32 {
        hash_parts(&[
            b"bychain/genesis",
            &self.genesis_timestamp.to_be_bytes(),
            &self.block_interval_s.to_be_bytes(),
            &self.tx_lifetime_blocks.to_be_bytes(),
            &(self.max_block_bytes as u64).to_be_bytes(),
            &self.finality_depth.to_be_bytes(),
        ])
    }

    pub fn slot_timestamp(&self, slot: u64) -> u64 {
        self.genesis_timestamp + slot * self.block_interval_s
    }

    /// Producer slot of a timestamp, if it falls exactly on a slot boundary.
    pub fn slot_of(&self, timestamp: u64) -> Option<u64> {
        let offset = timestamp.checked_sub(self.genesis_timestamp)?;
        (offset % self.block_interval_s == 0).then_some(offset / self.block_interval_s)
    }

    /// Largest encoded transaction that still fits an otherwise empty block.
    pub fn max_tx_bytes(&self) -> usize {
        self.max_block_bytes - Block::EMPTY_LEN
    }
}

/// Who may produce a block, and which payout it must carry.
pub trait ConsensusRules {
    /// Producer entitled to `slot` on the branch ending at `parent`.
    fn scheduled_producer(&self, store: &ChainStore, parent: &Hash32, slot: u64) -> Option<PublicKey>;

    /// Allocation the block at `height` on top of `parent` must include.
    fn required_allocation(
        &self,
        store: &ChainStore,
        parent: &Hash32,
        height: u64,
    ) -> Option<IncentiveAllocation>;
}

/// Round-robin over a fixed producer list; never requires an allocation.
#[derive(Clone, Debug)]
pub struct FixedSchedule {
    pub producers: Vec<PublicKey>,
}

impl ConsensusRules for FixedSchedule {
    fn scheduled_producer(&self, _: &ChainStore, _: &Hash32, slot: u64) -> Option<PublicKey> {
        if self.producers.is_empty() {
            return None;
        }
        Some(self.producers[(slot % self.producers.len() as u64) as usize])
    }

    fn required_allocation(&self, _: &ChainStore, _: &Hash32, _: u64) -> Option<IncentiveAllocation> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Locator {
    pub block: Hash32,
    pub tx: u32,
    pub op: u32,
}

/// Replay-relevant facts about one branch: commitment index keys, every
/// witness nonce ever committed, and transaction ids.
#[derive(Clone, Debug, Default)]
pub struct ChainIndex {
    commitments: HashMap<Hash32, Locator>,
    nonces: HashSet<WitnessNonce>,
    tx_ids: HashSet<Hash32>,
}

impl ChainIndex {
    fn apply(&mut self, block_hash: Hash32, block: &Block) {
        for (t, tx) in block.transactions.iter().enumerate() {
            self.tx_ids.insert(tx.id());
            for (o, op) in tx.operations.iter().enumerate() {
                if let Operation::PoLCommitment(c) = op {
                    let loc = Locator {
                        block: block_hash,
                        tx: t as u32,
                        op: o as u32,
                    };
                    self.commitments.entry(c.index_key()).or_insert(loc);
                    self.nonces.extend(c.witness_nonces());
                }
            }
        }
    }

    pub fn locate(&self, index_key: &Hash32) -> Option<Locator> {
        self.commitments.get(index_key).copied()
    }

    pub fn contains_tx(&self, id: &Hash32) -> bool {
        self.tx_ids.contains(id)
    }

    pub fn nonce_committed(&self, nonce: &WitnessNonce) -> bool {
        self.nonces.contains(nonce)
    }

    pub fn commitment_count(&self) -> usize {
        self.commitments.len()
    }
}

/// Claims made by a set of not-yet-committed transactions, used to reject
/// replays against both the chain and each other.
#[derive(Clone, Debug, Default)]
pub(crate) struct Claims {
    keys: HashSet<Hash32>,
    nonces: HashSet<WitnessNonce>,
    tx_ids: HashSet<Hash32>,
}

impl Claims {
    /// Claims everything `tx` commits to, or nothing if any part is already
    /// taken on `index` or by an earlier claim.
    pub(crate) fn try_claim(&mut self, tx: &Transaction, index: &ChainIndex) -> bool {
        let id = tx.id();
        if index.contains_tx(&id) || self.tx_ids.contains(&id) {
            return false;
        }
        let mut keys = HashSet::new();
        let mut nonces = HashSet::new();
        for c in tx.commitments() {
            let key = c.index_key();
            if index.locate(&key).is_some() || self.keys.contains(&key) || !keys.insert(key) {
                return false;
            }
            for n in c.witness_nonces() {
                if index.nonce_committed(&n) || self.nonces.contains(&n) || !nonces.insert(n) {
                    return false;
                }
            }
        }
        self.tx_ids.insert(id);
        self.keys.extend(keys);
        self.nonces.extend(nonces);
        true
    }
}

/// Context-free transaction checks plus expiry at `height`.
pub(crate) fn check_tx(
    tx: &Transaction,
    height: u64,
    config: &ChainConfig,
) -> Result<(), TxRejection> {
    if tx.encoded_len() > config.max_tx_bytes() {
        return Err(TxRejection::Oversize);
    }
    if tx.operations.is_empty() || !tx.operations.iter().all(Operation::well_formed) {
        return Err(TxRejection::BadOperation);
    }
    if !tx.verify_signature() {
        return Err(TxRejection::BadSignature);
    }
    if height > tx.expiration {
        return Err(TxRejection::Expired);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BlockError {
    #[error("unknown parent block")]
    UnknownParent,
    #[error("height does not follow parent")]
    BadHeight,
    #[error("timestamp not on a slot after the parent's")]
    BadSlot,
    #[error("block timestamp is in the future")]
    FutureBlock,
    #[error("merkle root mismatch")]
    BadMerkle,
    #[error("producer not scheduled for this slot")]
    WrongProducer,
    #[error("producer signature invalid")]
    BadSignature,
    #[error("transaction {index} invalid: {reason}")]
    BadTx { index: usize, reason: TxRejection },
    #[error("incentive allocation missing, misplaced or incorrect")]
    BadAllocation,
    #[error("block exceeds size cap")]
    Oversize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AppendOutcome {
    /// Already stored; nothing changed.
    Known,
    /// Tip advanced by one block on the same branch.
    Extended,
    /// Stored on a branch that is not longer than the tip.
    SideBranch,
    /// Tip switched branch. `orphaned` lists transactions from abandoned
    /// blocks that the new branch does not contain.
    Reorg { depth: u64, orphaned: Vec<Transaction> },
}

impl AppendOutcome {
    pub fn tip_changed(&self) -> bool {
        matches!(self, AppendOutcome::Extended | AppendOutcome::Reorg { .. })
    }
}

/// Every validated block, with the longest branch selected as tip.
///
/// Ties keep the branch whose head arrived first.
#[derive(Clone, Debug)]
pub struct ChainStore {
    config: ChainConfig,
    genesis: Hash32,
    blocks: HashMap<Hash32, Block>,
    children: HashMap<Hash32, Vec<Hash32>>,
    tip: Hash32,
    main: Vec<Hash32>,
    index: ChainIndex,
}

impl ChainStore {
    pub fn new(config: ChainConfig) -> Self {
        let genesis = Self::genesis_block(&config);
        let hash = genesis.hash();
        let mut blocks = HashMap::new();
        blocks.insert(hash, genesis);
        ChainStore {
            config,
            genesis: hash,
            blocks,
            children: HashMap::new(),
            tip: hash,
            main: vec![hash],
            index: ChainIndex::default(),
        }
    }

    pub fn genesis_block(config: &ChainConfig) -> Block {
        Block {
            header: BlockHeader {
                height: 0,
                prev_hash: config.digest(),
                merkle_root: Hash32::ZERO,
                timestamp: config.genesis_timestamp,
                producer: PublicKey::NONE,
            },
            producer_sig: Signature::NONE,
            transactions: Vec::new(),
        }
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn genesis_hash(&self) -> Hash32 {
        self.genesis
    }

    pub fn tip(&self) -> Hash32 {
        self.tip
    }

    pub fn tip_height(&self) -> u64 {
        (self.main.len() - 1) as u64
    }

    pub fn tip_block(&self) -> &Block {
        &self.blocks[&self.tip]
    }

    pub fn block(&self, hash: &Hash32) -> Option<&Block> {
        self.blocks.get(hash)
    }

    pub fn contains(&self, hash: &Hash32) -> bool {
        self.blocks.contains_key(hash)
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Block hashes of the tip chain, indexed by height.
    pub fn main_chain(&self) -> &[Hash32] {
        &self.main
    }

    pub fn main_blocks(&self) -> impl Iterator<Item = &Block> {
        self.main.iter().map(|h| &self.blocks[h])
    }

    pub fn is_on_main(&self, hash: &Hash32) -> bool {
        self.blocks
            .get(hash)
            .is_some_and(|b| self.main.get(b.height() as usize) == Some(hash))
    }

    /// Ancestor of `hash` at `height` (the block itself at its own height).
    pub fn ancestor(&self, hash: &Hash32, height: u64) -> Option<Hash32> {
        let mut cur = self.blocks.get(hash)?;
        let mut cur_hash = *hash;
        if height > cur.height() {
            return None;
        }
        while cur.height() > height {
            if self.is_on_main(&cur_hash) {
                return Some(self.main[height as usize]);
            }
            cur_hash = cur.header.prev_hash;
            cur = &self.blocks[&cur_hash];
        }
        Some(cur_hash)
    }

    /// Blocks from `hash` back towards genesis, newest first.
    pub fn walk_back<'a>(&'a self, hash: &Hash32) -> impl Iterator<Item = (Hash32, &'a Block)> + 'a {
        let mut next = self.blocks.get(hash).map(|b| (*hash, b));
        std::iter::from_fn(move || {
            let (h, b) = next?;
            next = if b.height() == 0 {
                None
            } else {
                let p = b.header.prev_hash;
                self.blocks.get(&p).map(|pb| (p, pb))
            };
            Some((h, b))
        })
    }

    pub fn index(&self) -> &ChainIndex {
        &self.index
    }

    /// Replay index for the branch ending at `head`.
    pub fn branch_index(&self, head: &Hash32) -> ChainIndex {
        if *head == self.tip {
            return self.index.clone();
        }
        let mut chain: Vec<(Hash32, &Block)> = self.walk_back(head).collect();
        chain.reverse();
        let mut index = ChainIndex::default();
        for (h, b) in chain {
            index.apply(h, b);
        }
        index
    }

    pub fn lookup_commitment(&self, witness_nonces: &[WitnessNonce]) -> Option<Locator> {
        let mut bytes = Vec::new();
        for n in witness_nonces {
            n.encode_to(&mut bytes);
        }
        self.index.locate(&crate::crypto::hash(&bytes))
    }

    pub fn commitment(&self, loc: &Locator) -> Option<&PoLCommitment> {
        self.blocks
            .get(&loc.block)?
            .transactions
            .get(loc.tx as usize)?
            .operations
            .get(loc.op as usize)?
            .as_commitment()
    }

    /// Whether `hash` is on the tip chain with at least `finality_depth`
    /// blocks above it.
    pub fn is_final(&self, hash: &Hash32) -> bool {
        self.is_on_main(hash)
            && self.tip_height() - self.blocks[hash].height() >= self.config.finality_depth
    }

    pub fn validate_block<R: ConsensusRules + ?Sized>(
        &self,
        block: &Block,
        rules: &R,
        now: u64,
    ) -> Result<(), BlockError> {
        let parent_hash = block.header.prev_hash;
        let parent = self.blocks.get(&parent_hash).ok_or(BlockError::UnknownParent)?;
        if block.height() != parent.height() + 1 {
            return Err(BlockError::BadHeight);
        }
        let slot = self
            .config
            .slot_of(block.header.timestamp)
            .ok_or(BlockError::BadSlot)?;
        if block.header.timestamp <= parent.header.timestamp {
            return Err(BlockError::BadSlot);
        }
        if block.header.timestamp > now {
            return Err(BlockError::FutureBlock);
        }
        if block.encoded_len() > self.config.max_block_bytes {
            return Err(BlockError::Oversize);
        }
        if merkle_root(&block.transactions) != block.header.merkle_root {
            return Err(BlockError::BadMerkle);
        }
        if rules.scheduled_producer(self, &parent_hash, slot) != Some(block.header.producer) {
            return Err(BlockError::WrongProducer);
        }
        if !block.verify_producer_sig() {
            return Err(BlockError::BadSignature);
        }
        self.check_allocation(block, rules)?;

        let index = self.branch_index(&parent_hash);
        let mut claims = Claims::default();
        for (i, tx) in block.transactions.iter().enumerate() {
            check_tx(tx, block.height(), &self.config)
                .map_err(|reason| BlockError::BadTx { index: i, reason })?;
            if !claims.try_claim(tx, &index) {
                return Err(BlockError::BadTx {
                    index: i,
                    reason: TxRejection::Replay,
                });
            }
        }
        Ok(())
    }

    fn check_allocation<R: ConsensusRules + ?Sized>(&self, block: &Block, rules: &R) -> Result<(), BlockError> {
        let required = rules.required_allocation(self, &block.header.prev_hash, block.height());
        let is_alloc = |op: &Operation| matches!(op, Operation::IncentiveAllocation(_));
        let alloc_ops = block.operations().filter(|op| is_alloc(op)).count();
        match required {
            None if alloc_ops == 0 => Ok(()),
            None => Err(BlockError::BadAllocation),
            Some(expected) => {
                let first = block.transactions.first().ok_or(BlockError::BadAllocation)?;
                let ok = alloc_ops == 1
                    && first.signer == block.header.producer
                    && first.operations == [Operation::IncentiveAllocation(expected)];
                ok.then_some(()).ok_or(BlockError::BadAllocation)
            }
        }
    }

    /// Validates and stores `block`, moving the tip if its branch is now
    /// strictly the longest.
    pub fn append<R: ConsensusRules + ?Sized>(
        &mut self,
        block: Block,
        rules: &R,
        now: u64,
    ) -> Result<AppendOutcome, BlockError> {
        let hash = block.hash();
        if self.blocks.contains_key(&hash) {
            return Ok(AppendOutcome::Known);
        }
        self.validate_block(&block, rules, now)?;
        let parent = block.header.prev_hash;
        let height = block.height();
        self.children.entry(parent).or_default().push(hash);
        self.blocks.insert(hash, block);

        if height <= self.tip_height() {
            return Ok(AppendOutcome::SideBranch);
        }
        if parent == self.tip {
            self.main.push(hash);
            self.tip = hash;
            let block = &self.blocks[&hash];
            self.index.apply(hash, block);
            return Ok(AppendOutcome::Extended);
        }
        Ok(self.reorg_to(hash))
    }

    fn reorg_to(&mut self, new_tip: Hash32) -> AppendOutcome {
        let fork = self.walk_back(&new_tip).find(|(h, _)| self.is_on_main(h)).map(|(_, b)| b.height()).unwrap_or(0);
        let abandoned: Vec<Hash32> = self.main[(fork as usize + 1)..].to_vec();

        let mut branch: Vec<Hash32> = self
            .walk_back(&new_tip)
            .take_while(|(_, b)| b.height() > fork)
            .map(|(h, _)| h)
            .collect();
        branch.reverse();
        self.main.truncate(fork as usize + 1);
        self.main.extend(branch);
        self.tip = new_tip;

        let mut index = ChainIndex::default();
        for h in &self.main {
            index.apply(*h, &self.blocks[h]);
        }
        self.index = index;

        let orphaned = abandoned
            .iter()
            .flat_map(|h| self.blocks[h].transactions.iter())
            .filter(|tx| !self.index.contains_tx(&tx.id()))
            .cloned()
            .collect();
        AppendOutcome::Reorg {
            depth: abandoned.len() as u64,
            orphaned,
        }
    }

    /// Hashes of stored blocks whose parent is `hash`.
    pub fn children(&self, hash: &Hash32) -> &[Hash32] {
        self.children.get(hash).map(Vec::as_slice).unwrap_or(&[])
    }
}

impl CommitmentLookup for ChainStore {
    fn find_commitment(&self, index_key: &Hash32) -> Option<PoLCommitment> {
        let loc = self.index.locate(index_key)?;
        self.commitment(&loc).cloned()
    }

    fn height(&self) -> u64 {
        self.tip_height()
    }
}
