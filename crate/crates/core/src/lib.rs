//! Privacy-preserving proof-of-location blockchain.
//!
//! Provers collect signed location endorsements from nearby witnesses under
//! one-use keys, commit them to a block ledger run by a delay-elected
//! committee, and later prove ownership through a challenge-response exchange.
//! Witnesses are paid from an epoch budget that a potential field splits in
//! favour of nodes near force equilibrium, which spreads them for coverage.

pub mod bench;
pub mod consensus;
pub mod crypto;
pub mod field;
pub mod ledger;
pub mod pol;
pub mod sim;
pub mod wire;
