//! Pending transactions, queued per sender by account nonce.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use thiserror::Error;

use crate::crypto::Digest;
use crate::types::{derive_attached_nonce, Address, Block, OracleKeys, Transaction, TxMode};
use crate::vm::check_tuple;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SubmitError {
    #[error("account nonce {got} is below the expected {expected}")]
    StaleNonce { expected: u64, got: u64 },
    #[error("a transaction with nonce {0} is already queued for this sender")]
    DuplicateNonce(u64),
    #[error("attached call {index} is invalid: {detail}")]
    InvalidAttachedCall { index: usize, detail: String },
    #[error("sealer-executed transaction carries pre-filled calls")]
    UnexpectedExcalls,
    #[error("no node is available to take the transaction")]
    Unavailable,
}

/// Somewhere transactions can be submitted, such as a node's mempool.
pub trait TxSubmit: Send + Sync {
    fn submit_tx(&self, tx: Transaction) -> Result<Digest, SubmitError>;
}

#[derive(Debug)]
pub struct Mempool {
    queues: HashMap<Address, BTreeMap<u64, (u64, Transaction)>>,
    confirmed: HashMap<Address, u64>,
    seq: u64,
    keys: OracleKeys,
    max_excalls: u32,
}

impl Mempool {
    pub fn new(keys: OracleKeys, max_excalls: u32) -> Self {
        Mempool { queues: HashMap::new(), confirmed: HashMap::new(), seq: 0, keys, max_excalls }
    }

    pub fn len(&self) -> usize {
        self.queues.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn expected(&self, a: &Address) -> u64 {
        self.confirmed.get(a).copied().unwrap_or(0)
    }

    pub fn submit(&mut self, tx: Transaction) -> Result<Digest, SubmitError> {
        let expected = self.expected(&tx.sender);
        if tx.account_nonce < expected {
            return Err(SubmitError::StaleNonce { expected, got: tx.account_nonce });
        }
        if self.queues.get(&tx.sender).is_some_and(|q| q.contains_key(&tx.account_nonce)) {
            return Err(SubmitError::DuplicateNonce(tx.account_nonce));
        }
        match tx.mode {
            TxMode::SealerExecutes if !tx.excalls.is_empty() => return Err(SubmitError::UnexpectedExcalls),
            TxMode::SealerExecutes => {}
            TxMode::InitiatorAttached => self.check_attached(&tx)?,
        }
        let id = tx.identity();
        self.seq += 1;
        self.queues.entry(tx.sender).or_default().insert(tx.account_nonce, (self.seq, tx));
        Ok(id)
    }

    fn check_attached(&self, tx: &Transaction) -> Result<(), SubmitError> {
        let invalid = |index, detail: String| SubmitError::InvalidAttachedCall { index, detail };
        if tx.excalls.is_empty() {
            return Err(invalid(0, "no calls attached".into()));
        }
        if tx.excalls.len() > self.max_excalls as usize {
            return Err(invalid(tx.excalls.len() - 1, "too many calls".into()));
        }
        for (i, t) in tx.excalls.iter().enumerate() {
            let nonce = derive_attached_nonce(&tx.sender, tx.account_nonce, i as u32);
            // The uri template lives in the contract and is matched at execution.
            check_tuple(t, &nonce, &t.request_uri, &self.keys).map_err(|f| invalid(i, f.to_string()))?;
        }
        Ok(())
    }

    /// Up to `max` transactions whose nonces follow on from the confirmed
    /// ones. Among senders, the one whose next transaction arrived first goes
    /// first.
    pub fn select(&self, max: usize) -> Vec<Transaction> {
        let mut heap = BinaryHeap::new();
        for (sender, q) in &self.queues {
            let next = self.expected(sender);
            if let Some((seq, _)) = q.get(&next) {
                heap.push(Reverse((*seq, *sender, next)));
            }
        }
        let mut out = Vec::new();
        while out.len() < max {
            let Some(Reverse((_, sender, nonce))) = heap.pop() else { break };
            let q = &self.queues[&sender];
            out.push(q[&nonce].1.clone());
            if let Some((seq, _)) = q.get(&(nonce + 1)) {
                heap.push(Reverse((*seq, sender, nonce + 1)));
            }
        }
        out
    }

    /// Drops included transactions and advances the confirmed nonces.
    pub fn on_block(&mut self, block: &Block) {
        for tx in &block.transactions {
            let c = self.confirmed.entry(tx.sender).or_insert(0);
            *c = (*c).max(tx.account_nonce + 1);
        }
        for tx in &block.transactions {
            let confirmed = self.confirmed[&tx.sender];
            if let Some(q) = self.queues.get_mut(&tx.sender) {
                q.retain(|n, _| *n >= confirmed);
                if q.is_empty() {
                    self.queues.remove(&tx.sender);
                }
            }
        }
    }
}
