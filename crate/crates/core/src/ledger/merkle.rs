use crate::crypto::{hash_parts, Hash32};

use super::Transaction;

/// Binary Merkle root over transaction ids. Odd levels repeat their last
/// node; an empty list hashes to all zeros.
pub fn merkle_root(transactions: &[Transaction]) -> Hash32 {
    let leaves: Vec<Hash32> = transactions.iter().map(Transaction::id).collect();
    root_of(leaves)
}

pub(crate) fn root_of(mut level: Vec<Hash32>) -> Hash32 {
    if level.is_empty() {
        return Hash32::ZERO;
    }
    while level.len() > 1 {
        if level.len() % 2 == 1 {
            level.push(*level.last().unwrap());
        }
        level = level
            .chunks(2)
            .map(|pair| hash_parts(&[pair[0].as_bytes(), pair[1].as_bytes()]))
            .collect();
    }
    level[0]
}
