use std::collections::BTreeMap;

use crate::crypto::Address;

use super::{ChainStore, Operation};

/// Token balances implied by the tip chain: a constant credit to each block's
/// producer plus every epoch allocation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IncentiveLedger {
    balances: BTreeMap<Address, f64>,
}

impl IncentiveLedger {
    pub fn from_chain(store: &ChainStore, block_credit: f64) -> Self {
        let mut ledger = IncentiveLedger::default();
        for block in store.main_blocks().skip(1) {
            ledger.credit(block.header.producer.address(), block_credit);
            for op in block.operations() {
                if let Operation::IncentiveAllocation(a) = op {
                    for (addr, amount) in &a.allocations {
                        ledger.credit(*addr, *amount);
                    }
                }
            }
        }
        ledger
    }

    fn credit(&mut self, addr: Address, amount: f64) {
        *self.balances.entry(addr).or_insert(0.0) += amount;
    }

    pub fn balance(&self, addr: &Address) -> f64 {
        self.balances.get(addr).copied().unwrap_or(0.0)
    }

    pub fn balances(&self) -> &BTreeMap<Address, f64> {
        &self.balances
    }

    pub fn total(&self) -> f64 {
        self.balances.values().sum()
    }
}
