//! Proof-of-authority chain whose contract VM can make verifiable external
//! calls: the sealer performs signed HTTP queries when finalizing a block and
//! verifiers check the recorded signatures instead of repeating the calls.

pub mod chain;
pub mod codec;
pub mod crypto;
pub mod types;
pub mod vm;

pub use crypto::{Digest, KeyPair, PublicKey};
pub use types::{Address, Block, BlockHeader, Receipt, ReceiptStatus, Transaction};
