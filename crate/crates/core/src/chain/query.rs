use crate::crypto::Digest;
use crate::types::{Address, BlockHeader, EventLog, Receipt};
use crate::vm::abi::{winnings_key, word_u64, Word};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReceiptRecord {
    pub receipt: Receipt,
    pub block_number: u64,
    pub tx_index: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventRecord {
    pub block_number: u64,
    pub tx_index: u32,
    pub event: EventLog,
}

/// Read access to a node's committed chain.
pub trait ChainQuery {
    fn head_header(&self) -> BlockHeader;
    fn height(&self) -> u64;
    fn receipt(&self, tx: &Digest) -> Option<ReceiptRecord>;
    /// Events with `topic` in blocks numbered `from_block` and later.
    fn events_by_topic(&self, topic: &Word, from_block: u64) -> Vec<EventRecord>;
    fn account_nonce(&self, account: &Address) -> u64;
    fn storage_at(&self, contract: &Address, key: &Word) -> Word;

    fn winnings(&self, contract: &Address, punter: &Address) -> u64 {
        word_u64(&self.storage_at(contract, &winnings_key(punter))).unwrap_or(u64::MAX)
    }
}
