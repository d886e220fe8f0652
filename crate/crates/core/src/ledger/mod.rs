//! Block ledger: typed operations inside signed transactions inside blocks,
//! plus the mempool, the fork-aware chain store and chain export.

mod export;
mod incentive;
mod mempool;
mod merkle;
mod store;

pub use export::{decode_export, export_chain, import_chain, ImportError, EXPORT_MAGIC, EXPORT_VERSION};
pub use incentive::IncentiveLedger;
pub use mempool::{Mempool, TxRejection};
pub use merkle::merkle_root;
pub use store::{
    AppendOutcome, BlockError, ChainConfig, ChainIndex, ChainStore, ConsensusRules, FixedSchedule,
    Locator,
};

use crate::crypto::{hash, sign, verify, Address, CryptoError, Hash32, KeyPair, PublicKey, Signature};
use crate::pol::{Location, PoLCommitment, VerificationRequest, MAX_COMMITMENT_BYTES};
use crate::wire::{
    put_count, put_f64, put_u64, put_u8, Decode, Encode, Reader, WireError,
};

pub const MAX_BLOCK_BYTES: usize = 2_000_000;

/// Per-epoch incentive payout computed by the block producer.
#[derive(Clone, Debug, PartialEq)]
pub struct IncentiveAllocation {
    pub epoch: u64,
    pub allocations: Vec<(Address, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Operation {
    PoLCommitment(PoLCommitment),
    /// A witness's position and locally computed net field force.
    WitnessReport {
        position: Location,
        net_force: [f64; 2],
    },
    IncentiveAllocation(IncentiveAllocation),
    VerificationRequest(VerificationRequest),
}

const TAG_COMMITMENT: u8 = 0;
const TAG_REPORT: u8 = 1;
const TAG_ALLOCATION: u8 = 2;
const TAG_VERIFICATION: u8 = 3;

impl Operation {
    pub fn as_commitment(&self) -> Option<&PoLCommitment> {
        match self {
            Operation::PoLCommitment(c) => Some(c),
            _ => None,
        }
    }

    /// Structural checks that do not depend on chain state.
    pub fn well_formed(&self) -> bool {
        match self {
            Operation::PoLCommitment(c) => c.encoded_len() <= MAX_COMMITMENT_BYTES && c.verify(),
            Operation::WitnessReport { net_force, .. } => net_force.iter().all(|f| f.is_finite()),
            Operation::IncentiveAllocation(a) => {
                a.allocations.iter().all(|(_, u)| u.is_finite() && *u >= 0.0)
            }
            Operation::VerificationRequest(v) => !v.witness_nonces.is_empty(),
        }
    }
}

impl Encode for Operation {
    fn encode_to(&self, out: &mut Vec<u8>) {
        match self {
            Operation::PoLCommitment(c) => {
                put_u8(out, TAG_COMMITMENT);
                c.encode_to(out);
            }
            Operation::WitnessReport {
                position,
                net_force,
            } => {
                put_u8(out, TAG_REPORT);
                position.encode_to(out);
                put_f64(out, net_force[0]);
                put_f64(out, net_force[1]);
            }
            Operation::IncentiveAllocation(a) => {
                put_u8(out, TAG_ALLOCATION);
                put_u64(out, a.epoch);
                put_count(out, a.allocations.len());
                for (addr, amount) in &a.allocations {
                    addr.encode_to(out);
                    put_f64(out, *amount);
                }
            }
            Operation::VerificationRequest(v) => {
                put_u8(out, TAG_VERIFICATION);
                v.encode_to(out);
            }
        }
    }
}

impl Decode for Operation {
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(match reader.u8()? {
            TAG_COMMITMENT => Operation::PoLCommitment(PoLCommitment::decode_from(reader)?),
            TAG_REPORT => Operation::WitnessReport {
                position: Location::decode_from(reader)?,
                net_force: [reader.f64()?, reader.f64()?],
            },
            TAG_ALLOCATION => {
                let epoch = reader.u64()?;
                let n = reader.u16()? as usize;
                let mut allocations = Vec::with_capacity(n);
                for _ in 0..n {
                    allocations.push((Address::decode_from(reader)?, reader.f64()?));
                }
                Operation::IncentiveAllocation(IncentiveAllocation { epoch, allocations })
            }
            TAG_VERIFICATION => Operation::VerificationRequest(VerificationRequest::decode_from(reader)?),
            tag => return Err(WireError::UnknownTag { what: "operation", tag }),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transaction {
    pub operations: Vec<Operation>,
    /// Last block height at which the transaction may be included.
    pub expiration: u64,
    pub signer: PublicKey,
    pub sig: Signature,
}

fn tx_payload(operations: &[Operation], expiration: u64) -> Vec<u8> {
    let mut out = Vec::new();
    put_count(&mut out, operations.len());
    for op in operations {
        op.encode_to(&mut out);
    }
    put_u64(&mut out, expiration);
    out
}

impl Transaction {
    pub fn new(
        operations: Vec<Operation>,
        expiration: u64,
        keys: &KeyPair,
    ) -> Result<Self, CryptoError> {
        let sig = sign(&keys.secret, &tx_payload(&operations, expiration))?;
        Ok(Transaction {
            operations,
            expiration,
            signer: keys.public,
            sig,
        })
    }

    pub fn signing_payload(&self) -> Vec<u8> {
        tx_payload(&self.operations, self.expiration)
    }

    pub fn verify_signature(&self) -> bool {
        verify(&self.signer, &self.signing_payload(), &self.sig)
    }

    pub fn id(&self) -> Hash32 {
        hash(&self.to_bytes())
    }

    pub fn commitments(&self) -> impl Iterator<Item = &PoLCommitment> {
        self.operations.iter().filter_map(Operation::as_commitment)
    }
}

impl Encode for Transaction {
    fn encode_to(&self, out: &mut Vec<u8>) {
        put_count(out, self.operations.len());
        for op in &self.operations {
            op.encode_to(out);
        }
        put_u64(out, self.expiration);
        self.signer.encode_to(out);
        self.sig.encode_to(out);
    }
}

impl Decode for Transaction {
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, WireError> {
        let operations: Vec<Operation> = reader.seq()?;
        if operations.is_empty() {
            return Err(WireError::InvalidValue("transaction without operations"));
        }
        Ok(Transaction {
            operations,
            expiration: reader.u64()?,
            signer: PublicKey::decode_from(reader)?,
            sig: Signature::decode_from(reader)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Hash32,
    pub merkle_root: Hash32,
    /// Seconds; determines the producer slot.
    pub timestamp: u64,
    pub producer: PublicKey,
}

impl BlockHeader {
    pub const ENCODED_LEN: usize = 8 + 32 + 32 + 8 + 33;

    pub fn hash(&self) -> Hash32 {
        hash(&self.to_bytes())
    }
}

impl Encode for BlockHeader {
    fn encode_to(&self, out: &mut Vec<u8>) {
        put_u64(out, self.height);
        self.prev_hash.encode_to(out);
        self.merkle_root.encode_to(out);
        put_u64(out, self.timestamp);
        self.producer.encode_to(out);
    }
}

impl Decode for BlockHeader {
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(BlockHeader {
            height: reader.u64()?,
            prev_hash: Hash32::decode_from(reader)?,
            merkle_root: Hash32::decode_from(reader)?,
            timestamp: reader.u64()?,
            producer: PublicKey::decode_from(reader)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub header: BlockHeader,
    /// Producer signature over the encoded header.
    pub producer_sig: Signature,
    pub transactions: Vec<Transaction>,
}

impl Block {
    /// Encoded size of a block with no transactions.
    pub const EMPTY_LEN: usize = BlockHeader::ENCODED_LEN + 64 + 2;

    pub fn hash(&self) -> Hash32 {
        self.header.hash()
    }

    pub fn height(&self) -> u64 {
        self.header.height
    }

    /// Builds and signs a block over `transactions`.
    pub fn sealed(
        height: u64,
        prev_hash: Hash32,
        timestamp: u64,
        transactions: Vec<Transaction>,
        producer: &KeyPair,
    ) -> Result<Self, CryptoError> {
        let header = BlockHeader {
            height,
            prev_hash,
            merkle_root: merkle_root(&transactions),
            timestamp,
            producer: producer.public,
        };
        let producer_sig = producer.sign(&header.to_bytes())?;
        Ok(Block {
            header,
            producer_sig,
            transactions,
        })
    }

    pub fn verify_producer_sig(&self) -> bool {
        verify(&self.header.producer, &self.header.to_bytes(), &self.producer_sig)
    }

    pub fn operations(&self) -> impl Iterator<Item = &Operation> {
        self.transactions.iter().flat_map(|tx| tx.operations.iter())
    }
}

impl Encode for Block {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.header.encode_to(out);
        self.producer_sig.encode_to(out);
        put_count(out, self.transactions.len());
        for tx in &self.transactions {
            tx.encode_to(out);
        }
    }
}

impl Decode for Block {
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Block {
            header: BlockHeader::decode_from(reader)?,
            producer_sig: Signature::decode_from(reader)?,
            transactions: reader.seq()?,
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::crypto::derive_keypair;
    use crate::pol::tests::stage_one;
    use crate::crypto::KeyEscrow;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    pub(crate) fn keys(i: u64) -> KeyPair {
        derive_keypair(&[11; 32], b"test/ledger", i)
    }

    pub(crate) fn commitment_tx(seed: u64, expiration: u64) -> Transaction {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut escrow = KeyEscrow::with_pool_size([seed as u8; 32], 1);
        let (com, note) = stage_one(&mut escrow, 2, 100 + seed, &mut rng);
        let signer = KeyPair::from_secret(&note.secret).unwrap();
        Transaction::new(vec![Operation::PoLCommitment(com)], expiration, &signer).unwrap()
    }

    pub(crate) fn report_tx(i: u64, force: f64, expiration: u64) -> Transaction {
        let op = Operation::WitnessReport {
            position: Location::from_degrees(1.0, 2.0).unwrap(),
            net_force: [force, -force],
        };
        Transaction::new(vec![op], expiration, &keys(i)).unwrap()
    }

    #[test]
    fn operations_roundtrip() {
        let ops = vec![
            commitment_tx(1, 5).operations[0].clone(),
            report_tx(0, 0.25, 5).operations[0].clone(),
            Operation::IncentiveAllocation(IncentiveAllocation {
                epoch: 3,
                allocations: vec![(keys(1).public.address(), 12.5), (keys(2).public.address(), 0.0)],
            }),
            Operation::VerificationRequest(VerificationRequest {
                witness_nonces: commitment_tx(2, 5).commitments().next().unwrap().witness_nonces(),
            }),
        ];
        for op in ops {
            assert!(op.well_formed());
            assert_eq!(Operation::from_bytes(&op.to_bytes()).unwrap(), op);
        }
        assert!(matches!(
            Operation::from_bytes(&[9]),
            Err(WireError::UnknownTag { tag: 9, .. })
        ));
    }

    #[test]
    fn transaction_signature_and_roundtrip() {
        let tx = report_tx(3, 1.5, 40);
        assert!(tx.verify_signature());
        let decoded = Transaction::from_bytes(&tx.to_bytes()).unwrap();
        assert_eq!(decoded, tx);
        let mut later = tx.clone();
        later.expiration += 1;
        assert!(!later.verify_signature());
        assert!(Transaction::from_bytes(&[0, 0]).is_err());
    }

    #[test]
    fn block_roundtrip_and_producer_sig() {
        let txs = vec![report_tx(1, 1.0, 9), commitment_tx(3, 9)];
        let block = Block::sealed(1, Hash32([1; 32]), 1000, txs, &keys(7)).unwrap();
        assert!(block.verify_producer_sig());
        let bytes = block.to_bytes();
        assert_eq!(Block::from_bytes(&bytes).unwrap(), block);
        let empty = Block::sealed(1, Hash32::ZERO, 0, vec![], &keys(7)).unwrap();
        assert_eq!(empty.to_bytes().len(), Block::EMPTY_LEN);
        let mut moved = block;
        moved.header.timestamp += 3;
        assert!(!moved.verify_producer_sig());
    }

    #[test]
    fn non_finite_force_is_malformed() {
        let op = Operation::WitnessReport {
            position: Location::from_degrees(0.0, 0.0).unwrap(),
            net_force: [f64::INFINITY, 0.0],
        };
        assert!(!op.well_formed());
    }
}
