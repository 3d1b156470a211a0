//! Block production and validation.
//!
//! A sealer builds a block in three steps: [`Chain::build_block`] dry-runs the
//! candidates to fix the intention root, [`Chain::finalize_excalls`] performs
//! the external calls under nonces derived from the intention hash, then
//! [`Chain::seal`] signs the result. Other nodes call [`Chain::apply_block`],
//! which replays the recorded calls without touching the network.

mod config;
mod engine;
mod log;
mod mempool;
mod port;
mod query;
mod state;

use thiserror::Error;

pub use config::ChainConfig;
pub use engine::{
    contract_address, genesis_block, seal_block, verify_seal, Chain, ChainStats, FinalizeEvent, FinalizedBlock,
    UnsealedBlock, VerifiedBlock,
};
pub use log::{read_log, BlockLog, LogError};
pub use mempool::{Mempool, SubmitError, TxSubmit};
pub use port::{CountingPort, HttpPort, SignedEnvelope};
pub use query::{ChainQuery, EventRecord, ReceiptRecord};
pub use state::{ContractAccount, WorldState};

/// Why a block was refused. Variants are listed in the order they are checked.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RejectReason {
    #[error("parent digest does not match the head")]
    ParentMismatch,
    #[error("block number does not follow the head")]
    BadNumber,
    #[error("timestamp is less than one block period after the parent")]
    TimestampTooEarly,
    #[error("sealer is not the in-turn authority")]
    OutOfTurnSealer,
    #[error("seal signature does not verify")]
    BadSeal,
    #[error("block exceeds the transaction capacity")]
    TooManyTransactions,
    #[error("transaction root mismatch")]
    TxRootMismatch,
    #[error("account nonce of tx {tx_index} does not follow state")]
    BadAccountNonce { tx_index: u32 },
    #[error("sealer-executed tx {tx_index} carries inline calls")]
    UnexpectedTxExcalls { tx_index: u32 },
    #[error("intention root mismatch")]
    IntentRootMismatch,
    #[error("extension entries are out of order")]
    MalformedExtension,
    #[error("duplicate extension entry for tx {tx_index} call {call_index}")]
    DuplicateExtensionEntry { tx_index: u32, call_index: u32 },
    #[error("missing extension entry for tx {tx_index} call {call_index}")]
    MissingExtensionEntry { tx_index: u32, call_index: u32 },
    #[error("unused extension entry for tx {tx_index} call {call_index}")]
    ExtraExtensionEntry { tx_index: u32, call_index: u32 },
    #[error("tx {tx_index} call {call_index}: oracle key is not pinned for the uri")]
    UnknownOraclePublicKey { tx_index: u32, call_index: u32 },
    #[error("tx {tx_index} call {call_index}: nonce mismatch")]
    NonceMismatch { tx_index: u32, call_index: u32 },
    #[error("tx {tx_index} call {call_index}: request uri mismatch")]
    UriMismatch { tx_index: u32, call_index: u32 },
    #[error("tx {tx_index} call {call_index}: response signature invalid")]
    InvalidSignature { tx_index: u32, call_index: u32 },
    #[error("state root mismatch")]
    StateRootMismatch,
}

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("block rejected: {0}")]
    Rejected(#[from] RejectReason),
    #[error("node is not the in-turn sealer for block {number}")]
    OutOfTurn { number: u64 },
    #[error("block log write failed: {0}")]
    LogWrite(String),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("chain halted after a block log failure")]
    Halted,
}
