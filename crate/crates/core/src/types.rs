//! Canonical data model: transactions, blocks, receipts and the verifiable
//! external-call tuple.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::{put_bytes, put_list, put_u32, put_u64, put_u8, Decode, DecodeError, Encode, Reader};
use crate::crypto::{hash_bytes, hash_parts, verify_response, Digest, PublicKey};

/// Largest response body a tuple may carry.
pub const MAX_RESPONSE_LEN: usize = 4096;

/// Placeholder in an EXCALL URI template replaced by the hex-encoded nonce.
pub const NONCE_PLACEHOLDER: &str = "{nonce}";

pub type Nonce = [u8; 32];

/// 20-byte account or contract address: the leading bytes of a key hash.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub fn from_public_key(pk: &PublicKey) -> Self {
        Self::from_digest(&hash_bytes(&pk.0))
    }

    pub fn from_digest(d: &Digest) -> Self {
        let mut a = [0u8; 20];
        a.copy_from_slice(&d.0[..20]);
        Address(a)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", &self.to_hex()[..12])
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", self.to_hex())
    }
}

/// A recorded external call: the request, the oracle key and its signed answer.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VerifiableExternalCall {
    pub request_uri: String,
    pub request_nonce: Nonce,
    pub public_key: PublicKey,
    pub response: Vec<u8>,
    pub signature: Vec<u8>,
}

impl VerifiableExternalCall {
    /// Structural checks independent of the signature.
    pub fn check_shape(&self) -> Result<(), DecodeError> {
        if !self.request_uri.starts_with("http") {
            return Err(DecodeError::InvalidValue(format!("request uri {:?} is not http", self.request_uri)));
        }
        if self.response.len() > MAX_RESPONSE_LEN {
            return Err(DecodeError::InvalidValue(format!(
                "response of {} bytes exceeds {MAX_RESPONSE_LEN}",
                self.response.len()
            )));
        }
        Ok(())
    }

    /// A tuple is valid iff its signature verifies over the nonce and response.
    pub fn is_valid(&self) -> bool {
        self.check_shape().is_ok()
            && verify_response(&self.public_key, &self.response, &self.request_nonce, &self.signature)
    }
}

impl Encode for VerifiableExternalCall {
    fn encode_to(&self, out: &mut Vec<u8>) {
        put_bytes(out, self.request_uri.as_bytes());
        out.extend_from_slice(&self.request_nonce);
        out.extend_from_slice(&self.public_key.0);
        put_bytes(out, &self.response);
        put_bytes(out, &self.signature);
    }
}

impl Decode for VerifiableExternalCall {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let v = VerifiableExternalCall {
            request_uri: r.string()?,
            request_nonce: r.array()?,
            public_key: PublicKey(r.array()?),
            response: r.bytes()?.to_vec(),
            signature: r.bytes()?.to_vec(),
        };
        v.check_shape()?;
        Ok(v)
    }
}

/// Oracle public keys pinned per URI prefix. The longest matching prefix wins.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleKeys {
    pins: Vec<(String, PublicKey)>,
}

impl OracleKeys {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pin(&mut self, uri_prefix: impl Into<String>, key: PublicKey) {
        let prefix = uri_prefix.into();
        self.pins.retain(|(p, _)| *p != prefix);
        self.pins.push((prefix, key));
    }

    pub fn with(mut self, uri_prefix: impl Into<String>, key: PublicKey) -> Self {
        self.pin(uri_prefix, key);
        self
    }

    pub fn key_for(&self, uri: &str) -> Option<PublicKey> {
        self.pins
            .iter()
            .filter(|(p, _)| uri.starts_with(p.as_str()))
            .max_by_key(|(p, _)| p.len())
            .map(|(_, k)| *k)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, PublicKey)> {
        self.pins.iter()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TxMode {
    /// The sealer performs the calls at finalization.
    SealerExecutes,
    /// The submitter attaches already-signed tuples.
    InitiatorAttached,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TxTarget {
    Deploy,
    Contract(Address),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Transaction {
    pub sender: Address,
    pub account_nonce: u64,
    pub target: TxTarget,
    pub input: Vec<u8>,
    pub excalls: Vec<VerifiableExternalCall>,
    pub mode: TxMode,
}

impl Transaction {
    pub fn call(sender: Address, account_nonce: u64, contract: Address, input: Vec<u8>) -> Self {
        Transaction {
            sender,
            account_nonce,
            target: TxTarget::Contract(contract),
            input,
            excalls: Vec::new(),
            mode: TxMode::SealerExecutes,
        }
    }

    pub fn deploy(sender: Address, account_nonce: u64, input: Vec<u8>) -> Self {
        Transaction {
            sender,
            account_nonce,
            target: TxTarget::Deploy,
            input,
            excalls: Vec::new(),
            mode: TxMode::SealerExecutes,
        }
    }

    /// Digest identifying the transaction. Sealer-filled calls are not part of it.
    pub fn identity(&self) -> Digest {
        tx_identity(self)
    }
}

fn encode_tx(tx: &Transaction, out: &mut Vec<u8>, with_excalls: bool) {
    out.extend_from_slice(&tx.sender.0);
    put_u64(out, tx.account_nonce);
    match tx.target {
        TxTarget::Deploy => put_u8(out, 0),
        TxTarget::Contract(a) => {
            put_u8(out, 1);
            out.extend_from_slice(&a.0);
        }
    }
    put_bytes(out, &tx.input);
    if with_excalls {
        put_list(out, &tx.excalls);
    } else {
        put_u32(out, 0);
    }
    put_u8(
        out,
        match tx.mode {
            TxMode::SealerExecutes => 0,
            TxMode::InitiatorAttached => 1,
        },
    );
}

impl Encode for Transaction {
    fn encode_to(&self, out: &mut Vec<u8>) {
        encode_tx(self, out, true);
    }
}

impl Decode for Transaction {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let sender = Address(r.array()?);
        let account_nonce = r.u64()?;
        let target = match r.u8()? {
            0 => TxTarget::Deploy,
            1 => TxTarget::Contract(Address(r.array()?)),
            t => return Err(DecodeError::InvalidValue(format!("tx target tag {t}"))),
        };
        let input = r.bytes()?.to_vec();
        let excalls = r.list()?;
        let mode = match r.u8()? {
            0 => TxMode::SealerExecutes,
            1 => TxMode::InitiatorAttached,
            t => return Err(DecodeError::InvalidValue(format!("tx mode tag {t}"))),
        };
        if mode == TxMode::InitiatorAttached && excalls.is_empty() {
            return Err(DecodeError::InvalidValue("initiator-attached tx without calls".into()));
        }
        Ok(Transaction { sender, account_nonce, target, input, excalls, mode })
    }
}

pub fn tx_identity(tx: &Transaction) -> Digest {
    let mut out = Vec::with_capacity(96 + tx.input.len());
    encode_tx(tx, &mut out, tx.mode == TxMode::InitiatorAttached);
    hash_bytes(&out)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EventLog {
    pub contract: Address,
    pub topic: [u8; 32],
    pub data: Vec<u8>,
}

impl Encode for EventLog {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.contract.0);
        out.extend_from_slice(&self.topic);
        put_bytes(out, &self.data);
    }
}

impl Decode for EventLog {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(EventLog { contract: Address(r.array()?), topic: r.array()?, data: r.bytes()?.to_vec() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReceiptStatus {
    Success,
    FailedExec,
    FailedExcallUnverified,
    FailedExcallNoResponse,
}

impl ReceiptStatus {
    fn tag(self) -> u8 {
        match self {
            ReceiptStatus::Success => 0,
            ReceiptStatus::FailedExec => 1,
            ReceiptStatus::FailedExcallUnverified => 2,
            ReceiptStatus::FailedExcallNoResponse => 3,
        }
    }

    pub fn is_success(self) -> bool {
        self == ReceiptStatus::Success
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Receipt {
    pub tx_digest: Digest,
    pub status: ReceiptStatus,
    pub events: Vec<EventLog>,
    pub excall_count: u32,
    /// Return word left on the stack at STOP, if any.
    pub output: Vec<u8>,
}

impl Encode for Receipt {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.tx_digest.0);
        put_u8(out, self.status.tag());
        put_list(out, &self.events);
        put_u32(out, self.excall_count);
        put_bytes(out, &self.output);
    }
}

impl Decode for Receipt {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let tx_digest = Digest(r.array()?);
        let status = match r.u8()? {
            0 => ReceiptStatus::Success,
            1 => ReceiptStatus::FailedExec,
            2 => ReceiptStatus::FailedExcallUnverified,
            3 => ReceiptStatus::FailedExcallNoResponse,
            t => return Err(DecodeError::InvalidValue(format!("receipt status {t}"))),
        };
        let events = r.list()?;
        let excall_count = r.u32()?;
        let output = r.bytes()?.to_vec();
        if status != ReceiptStatus::Success && !events.is_empty() {
            return Err(DecodeError::InvalidValue("failed receipt carries events".into()));
        }
        Ok(Receipt { tx_digest, status, events, excall_count, output })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BlockHeader {
    pub parent_digest: Digest,
    pub number: u64,
    /// Unix milliseconds.
    pub timestamp: u64,
    pub tx_root: Digest,
    pub intent_root: Digest,
    pub state_root: Digest,
    pub sealer: Address,
}

impl Encode for BlockHeader {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.parent_digest.0);
        put_u64(out, self.number);
        put_u64(out, self.timestamp);
        out.extend_from_slice(&self.tx_root.0);
        out.extend_from_slice(&self.intent_root.0);
        out.extend_from_slice(&self.state_root.0);
        out.extend_from_slice(&self.sealer.0);
    }
}

impl Decode for BlockHeader {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(BlockHeader {
            parent_digest: Digest(r.array()?),
            number: r.u64()?,
            timestamp: r.u64()?,
            tx_root: Digest(r.array()?),
            intent_root: Digest(r.array()?),
            state_root: Digest(r.array()?),
            sealer: Address(r.array()?),
        })
    }
}

/// What the sealer observed for one executed EXCALL.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum CallRecord {
    /// A signed answer that verified under the pinned key.
    Verified(VerifiableExternalCall),
    /// The service did not answer (timeout, transport error, HTTP error).
    NoResponse,
    /// The service answered but the answer did not verify.
    Unverified,
}

impl CallRecord {
    pub fn tuple(&self) -> Option<&VerifiableExternalCall> {
        match self {
            CallRecord::Verified(t) => Some(t),
            _ => None,
        }
    }
}

impl Encode for CallRecord {
    fn encode_to(&self, out: &mut Vec<u8>) {
        match self {
            CallRecord::Verified(t) => {
                put_u8(out, 0);
                t.encode_to(out);
            }
            CallRecord::NoResponse => put_u8(out, 1),
            CallRecord::Unverified => put_u8(out, 2),
        }
    }
}

impl Decode for CallRecord {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match r.u8()? {
            0 => Ok(CallRecord::Verified(VerifiableExternalCall::decode_from(r)?)),
            1 => Ok(CallRecord::NoResponse),
            2 => Ok(CallRecord::Unverified),
            t => Err(DecodeError::InvalidValue(format!("call record tag {t}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExtensionEntry {
    pub tx_index: u32,
    pub call_index: u32,
    pub record: CallRecord,
}

impl Encode for ExtensionEntry {
    fn encode_to(&self, out: &mut Vec<u8>) {
        put_u32(out, self.tx_index);
        put_u32(out, self.call_index);
        self.record.encode_to(out);
    }
}

impl Decode for ExtensionEntry {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(ExtensionEntry { tx_index: r.u32()?, call_index: r.u32()?, record: CallRecord::decode_from(r)? })
    }
}

/// A declared external call, committed to by the header's intent root.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Intention {
    pub tx_index: u32,
    pub call_index: u32,
    pub uri_template: String,
}

impl Encode for Intention {
    fn encode_to(&self, out: &mut Vec<u8>) {
        put_u32(out, self.tx_index);
        put_u32(out, self.call_index);
        put_bytes(out, self.uri_template.as_bytes());
    }
}

impl Decode for Intention {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Intention { tx_index: r.u32()?, call_index: r.u32()?, uri_template: r.string()? })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<Transaction>,
    pub excall_extension: Vec<ExtensionEntry>,
    pub seal: Vec<u8>,
}

impl Block {
    /// The block's identity, used as the child's `parent_digest`.
    pub fn digest(&self) -> Digest {
        sealed_digest(self)
    }

    /// Extension records for one transaction, in call order.
    pub fn records_for(&self, tx_index: u32) -> Vec<CallRecord> {
        self.excall_extension
            .iter()
            .filter(|e| e.tx_index == tx_index)
            .map(|e| e.record.clone())
            .collect()
    }
}

impl Encode for Block {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.header.encode_to(out);
        put_list(out, &self.transactions);
        put_list(out, &self.excall_extension);
        put_bytes(out, &self.seal);
    }
}

impl Decode for Block {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Block {
            header: BlockHeader::decode_from(r)?,
            transactions: r.list()?,
            excall_extension: r.list()?,
            seal: r.bytes()?.to_vec(),
        })
    }
}

/// Root over the ordered transaction identities.
pub fn tx_root(txs: &[Transaction]) -> Digest {
    let mut out = Vec::with_capacity(4 + 32 * txs.len());
    put_u32(&mut out, txs.len() as u32);
    for tx in txs {
        out.extend_from_slice(&tx_identity(tx).0);
    }
    hash_bytes(&out)
}

pub fn intent_root(intentions: &[Intention]) -> Digest {
    let mut out = Vec::new();
    put_list(&mut out, intentions);
    hash_bytes(&out)
}

/// Hash of the header without its state root. The extension is not covered.
pub fn intention_hash(block: &Block) -> Digest {
    let h = &block.header;
    hash_parts(&[
        &h.parent_digest.0,
        &h.number.to_be_bytes(),
        &h.timestamp.to_be_bytes(),
        &h.tx_root.0,
        &h.intent_root.0,
        &h.sealer.0,
    ])
}

pub fn extension_root(block: &Block) -> Digest {
    let mut out = Vec::new();
    put_list(&mut out, &block.excall_extension);
    hash_bytes(&out)
}

/// The digest a seal signs: intention hash, extension root and state root.
pub fn sealed_digest(block: &Block) -> Digest {
    hash_parts(&[&intention_hash(block).0, &extension_root(block).0, &block.header.state_root.0])
}

/// Nonce for a sealer-executed call: `H(intention_hash ‖ tx_index ‖ call_index)`.
pub fn derive_call_nonce(intention_hash: &Digest, tx_index: u32, call_index: u32) -> Nonce {
    hash_parts(&[&intention_hash.0, &tx_index.to_be_bytes(), &call_index.to_be_bytes()]).0
}

/// Nonce for an initiator-attached call, bound to the sender's account nonce.
pub fn derive_attached_nonce(sender: &Address, account_nonce: u64, call_index: u32) -> Nonce {
    hash_parts(&[b"EXCALL-INIT", &sender.0, &account_nonce.to_be_bytes(), &call_index.to_be_bytes()]).0
}

pub fn substitute_nonce(template: &str, nonce: &Nonce) -> String {
    template.replace(NONCE_PLACEHOLDER, &hex::encode(nonce))
}
