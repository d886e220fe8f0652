use thiserror::Error;

use crate::wire::{put_u16, put_u32, Decode, Encode, Reader, WireError};

use super::{AppendOutcome, Block, BlockError, ChainConfig, ChainStore, ConsensusRules};

pub const EXPORT_MAGIC: [u8; 4] = *b"BYCH";
pub const EXPORT_VERSION: u16 = 1;

/// Serializes the tip chain, genesis first: magic, version, `u32` block count,
/// then each block prefixed by its `u32` byte length.
pub fn export_chain(store: &ChainStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&EXPORT_MAGIC);
    put_u16(&mut out, EXPORT_VERSION);
    put_u32(&mut out, store.main_chain().len() as u32);
    for block in store.main_blocks() {
        let bytes = block.to_bytes();
        put_u32(&mut out, bytes.len() as u32);
        out.extend_from_slice(&bytes);
    }
    out
}

/// Parses an export back into blocks. The caller replays them through
/// [`ChainStore::append`] to re-validate.
pub fn decode_export(bytes: &[u8]) -> Result<Vec<Block>, WireError> {
    let mut reader = Reader::new(bytes);
    if reader.array::<4>()? != EXPORT_MAGIC {
        return Err(WireError::InvalidValue("export magic"));
    }
    if reader.u16()? != EXPORT_VERSION {
        return Err(WireError::InvalidValue("export version"));
    }
    let count = reader.u32()? as usize;
    let mut blocks = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = reader.u32()? as usize;
        blocks.push(Block::from_bytes(reader.take(len)?)?);
    }
    reader.finish()?;
    Ok(blocks)
}

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("undecodable export: {0}")]
    Decode(#[from] WireError),
    #[error("genesis block does not match the chain configuration")]
    Genesis,
    #[error("block {position} rejected: {source}")]
    Block { position: usize, source: BlockError },
    #[error("block {0} does not extend its predecessor")]
    NotLinear(usize),
}

/// Rebuilds a store from an export, re-validating every block against
/// `rules` as if it had arrived over the network.
pub fn import_chain<R: ConsensusRules + ?Sized>(
    bytes: &[u8],
    config: ChainConfig,
    rules: &R,
    now: u64,
) -> Result<ChainStore, ImportError> {
    let blocks = decode_export(bytes)?;
    let mut store = ChainStore::new(config);
    let mut blocks = blocks.into_iter();
    if blocks.next().as_ref() != Some(store.tip_block()) {
        return Err(ImportError::Genesis);
    }
    for (i, block) in blocks.enumerate() {
        let position = i + 1;
        match store.append(block, rules, now) {
            Ok(AppendOutcome::Extended) => {}
            Ok(_) => return Err(ImportError::NotLinear(position)),
            Err(source) => return Err(ImportError::Block { position, source }),
        }
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::tests::{commitment_tx, keys};
    use crate::ledger::{ChainConfig, FixedSchedule, Mempool};

    #[test]
    fn export_roundtrip_and_replay() {
        let rules = FixedSchedule {
            producers: vec![keys(0).public],
        };
        let mut store = ChainStore::new(ChainConfig::default());
        let mut pool = Mempool::new();
        for slot in 1..=3 {
            pool.submit(&store, commitment_tx(slot, 90)).unwrap();
            let b = pool
                .assemble_block(&store, &keys(0), store.config().slot_timestamp(slot), None)
                .unwrap();
            store.append(b, &rules, u64::MAX).unwrap();
            pool.prune(&store);
        }
        let bytes = export_chain(&store);
        let blocks = decode_export(&bytes).unwrap();
        assert_eq!(blocks.len(), 4);
        assert_eq!(blocks[0], ChainStore::genesis_block(store.config()));

        let mut copy = ChainStore::new(ChainConfig::default());
        for b in blocks.into_iter().skip(1) {
            copy.append(b, &rules, u64::MAX).unwrap();
        }
        assert_eq!(copy.tip(), store.tip());
        assert_eq!(export_chain(&copy), bytes);
        let imported = import_chain(&bytes, ChainConfig::default(), &rules, u64::MAX).unwrap();
        assert_eq!(imported.tip(), store.tip());

        let other = ChainConfig {
            genesis_timestamp: 1,
            ..ChainConfig::default()
        };
        assert!(matches!(
            import_chain(&bytes, other, &rules, u64::MAX),
            Err(ImportError::Genesis)
        ));
        let wrong_producer = FixedSchedule {
            producers: vec![keys(1).public],
        };
        assert!(matches!(
            import_chain(&bytes, ChainConfig::default(), &wrong_producer, u64::MAX),
            Err(ImportError::Block { position: 1, .. })
        ));

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_export(&bad).is_err());
        assert!(decode_export(&bytes[..bytes.len() - 1]).is_err());
    }
}
