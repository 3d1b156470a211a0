//! The trusted external party: an HTTP service returning nonce-bound signed
//! outcomes, and the relayer that answers standard-oracle bets with callback
//! transactions.

pub mod relayer;
pub mod service;

pub use relayer::{Cursor, OutcomeSource, RelayError, Relayer};
pub use service::{serve, OracleService, ServerHandle, ServiceError, ServiceStats};
