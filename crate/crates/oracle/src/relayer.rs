//! Watches for `BetPlaced` events and answers each with a
//! `continueBetOracle(punter, ref, won)` transaction.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use excall_core::chain::{ChainQuery, HttpPort, SubmitError, TxSubmit};
use excall_core::crypto::{hash_parts, verify_response, PublicKey};
use excall_core::types::{Address, Transaction};
use excall_core::vm::abi::{address_word, bool_word, call_input, data_words, event_topic, u64_word, word_address, word_u64, Word};
use excall_core::vm::ExcallPort;
use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::service::OracleService;

pub const BET_PLACED: &str = "BetPlaced";
const MAX_SUBMIT_ATTEMPTS: usize = 16;

#[derive(Debug, Error)]
pub enum RelayError {
    #[error("outcome fetch failed: {0}")]
    Fetch(String),
    #[error("outcome signature does not verify under the pinned key")]
    BadSignature,
    #[error("callback rejected: {0}")]
    Rejected(#[from] SubmitError),
    #[error("cursor file: {0}")]
    Cursor(String),
}

/// How the relayer learns outcomes.
pub enum OutcomeSource {
    /// Draws directly from an in-process service.
    Local(Arc<OracleService>),
    /// Fetches from a running service and checks the signature.
    Remote { base_url: String, public_key: PublicKey, port: HttpPort },
}

impl OutcomeSource {
    pub fn remote(base_url: impl Into<String>, public_key: PublicKey, timeout: Duration) -> Self {
        OutcomeSource::Remote { base_url: base_url.into(), public_key, port: HttpPort::new(timeout) }
    }

    fn outcome(&self, request_nonce: &[u8; 32]) -> Result<bool, RelayError> {
        match self {
            OutcomeSource::Local(service) => Ok(service.draw()),
            OutcomeSource::Remote { base_url, public_key, port } => {
                let uri = format!("{}/excallrand?nonce={}", base_url.trim_end_matches('/'), hex::encode(request_nonce));
                let t = port.call(&uri, request_nonce).map_err(|e| RelayError::Fetch(e.to_string()))?;
                if t.public_key != *public_key || !verify_response(public_key, &t.response, request_nonce, &t.signature) {
                    return Err(RelayError::BadSignature);
                }
                Ok(t.response.first() == Some(&b'1'))
            }
        }
    }
}

/// Scan position, persisted so a restarted relayer neither skips nor repeats events.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cursor {
    pub next_block: u64,
    /// Events of `next_block` already answered.
    pub answered_in_block: u32,
    pub next_nonce: u64,
}

impl Cursor {
    pub fn load(path: &Path) -> Result<Self, RelayError> {
        if !path.exists() {
            return Ok(Cursor::default());
        }
        let text = std::fs::read_to_string(path).map_err(|e| RelayError::Cursor(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| RelayError::Cursor(e.to_string()))
    }

    pub fn store(&self, path: &Path) -> Result<(), RelayError> {
        let tmp = path.with_extension("tmp");
        let body = serde_json::to_string(self).expect("cursor serializes");
        std::fs::write(&tmp, body).and_then(|_| std::fs::rename(&tmp, path)).map_err(|e| RelayError::Cursor(e.to_string()))
    }
}

pub struct Relayer {
    contract: Address,
    oracle: Address,
    source: OutcomeSource,
    cursor: Cursor,
    cursor_path: Option<PathBuf>,
    topic: Word,
    answered: u64,
}

impl Relayer {
    /// `oracle` is the address the contract was constructed with; callbacks are
    /// sent from it.
    pub fn new(contract: Address, oracle: Address, source: OutcomeSource, cursor_path: Option<PathBuf>) -> Result<Self, RelayError> {
        let cursor = match &cursor_path {
            Some(p) => Cursor::load(p)?,
            None => Cursor::default(),
        };
        Ok(Relayer { contract, oracle, source, cursor, cursor_path, topic: event_topic(BET_PLACED), answered: 0 })
    }

    pub fn cursor(&self) -> Cursor {
        self.cursor
    }

    /// Callbacks submitted by this instance.
    pub fn answered(&self) -> u64 {
        self.answered
    }

    fn save(&self) -> Result<(), RelayError> {
        match &self.cursor_path {
            Some(p) => self.cursor.store(p),
            None => Ok(()),
        }
    }

    /// Answers every unanswered event up to the current head and returns how
    /// many callbacks were submitted.
    pub fn poll_once(&mut self, chain: &dyn ChainQuery, sink: &dyn TxSubmit) -> Result<usize, RelayError> {
        let head = chain.height();
        if self.cursor.next_block > head {
            return Ok(0);
        }
        let events = chain.events_by_topic(&self.topic, self.cursor.next_block);
        let mut sent = 0;
        let mut skip = self.cursor.answered_in_block;
        let mut block = self.cursor.next_block;
        let contract = self.contract;
        for ev in events.iter().filter(|e| e.block_number <= head && e.event.contract == contract) {
            if ev.block_number != block {
                block = ev.block_number;
                skip = 0;
                self.cursor.next_block = block;
                self.cursor.answered_in_block = 0;
            }
            if skip > 0 {
                skip -= 1;
                continue;
            }
            let words = data_words(&ev.event.data);
            let (Some(punter), Some(oracle_ref)) = (words.first().map(word_address), words.get(1).and_then(word_u64)) else {
                warn!("malformed BetPlaced event in block {}", ev.block_number);
                self.cursor.answered_in_block += 1;
                continue;
            };
            let nonce = hash_parts(&[b"EXCALL-RELAY", &self.contract.0, &punter.0, &oracle_ref.to_be_bytes()]).0;
            let won = self.source.outcome(&nonce)?;
            self.submit(chain, sink, punter, oracle_ref, won)?;
            self.cursor.answered_in_block += 1;
            self.save()?;
            sent += 1;
        }
        self.cursor.next_block = head + 1;
        self.cursor.answered_in_block = 0;
        self.save()?;
        Ok(sent)
    }

    fn submit(&mut self, chain: &dyn ChainQuery, sink: &dyn TxSubmit, punter: Address, oracle_ref: u64, won: bool) -> Result<(), RelayError> {
        let input = call_input("continueBetOracle", &[address_word(&punter), u64_word(oracle_ref), bool_word(won)])
            .expect("non-empty name");
        let mut nonce = self.cursor.next_nonce.max(chain.account_nonce(&self.oracle));
        let mut last = None;
        for _ in 0..MAX_SUBMIT_ATTEMPTS {
            let tx = Transaction::call(self.oracle, nonce, self.contract, input.clone());
            match sink.submit_tx(tx) {
                Ok(_) => {
                    debug!("callback for {punter} ref {oracle_ref} won={won} nonce {nonce}");
                    self.cursor.next_nonce = nonce + 1;
                    self.answered += 1;
                    return Ok(());
                }
                Err(SubmitError::StaleNonce { expected, .. }) => nonce = expected.max(nonce + 1),
                Err(SubmitError::DuplicateNonce(_)) => nonce += 1,
                Err(e) => return Err(e.into()),
            }
            last = Some(nonce);
        }
        warn!("giving up on callback for {punter} ref {oracle_ref} at nonce {last:?}");
        Err(RelayError::Rejected(SubmitError::DuplicateNonce(nonce)))
    }

    /// Polls until `stop` is set.
    pub fn run(&mut self, chain: &dyn ChainQuery, sink: &dyn TxSubmit, interval: Duration, stop: &AtomicBool) {
        info!("relayer watching {} from block {}", self.contract, self.cursor.next_block);
        while !stop.load(Ordering::SeqCst) {
            if let Err(e) = self.poll_once(chain, sink) {
                warn!("relayer poll failed: {e}");
            }
            std::thread::sleep(interval);
        }
    }
}
