use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;

use log::{debug, warn};

use crate::codec::{Decode, Reader};
use crate::crypto::{hash_parts, verify_raw, Digest, KeyPair, SEAL_DOMAIN};
use crate::types::{
    derive_call_nonce, intent_root, intention_hash, sealed_digest, substitute_nonce, tx_root, Address, Block,
    BlockHeader, CallRecord, ExtensionEntry, Intention, Nonce, Receipt, ReceiptStatus, Transaction, TxMode, TxTarget,
    VerifiableExternalCall,
};
use crate::vm::abi::{address_word, selector, Word};
use crate::vm::{
    check_tuple, execute, BlockEnv, ContractProgram, ExcallPort, ExecContext, ExecFault, ExecOutcome, NonceSource,
    PortError, TupleFault,
};

use super::config::ChainConfig;
use super::log::{read_log, BlockLog, LogError};
use super::query::{ChainQuery, EventRecord, ReceiptRecord};
use super::state::WorldState;
use super::{ChainError, RejectReason};

/// A candidate block after the dry run: header fields up to `intent_root` are fixed.
#[derive(Clone, Debug)]
pub struct UnsealedBlock {
    pub block: Block,
    pub intentions: Vec<Intention>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FinalizeEvent {
    IntentionFixed(Digest),
    CallIssued { tx_index: u32, call_index: u32, uri: String },
    StateRootComputed(Digest),
}

/// A block with its extension and state root filled in, ready to seal.
#[derive(Clone, Debug)]
pub struct FinalizedBlock {
    pub block: Block,
    pub receipts: Vec<Receipt>,
    pub post_state: WorldState,
    pub trace: Vec<FinalizeEvent>,
}

/// A block that passed verification, with the state it produces.
#[derive(Clone, Debug)]
pub struct VerifiedBlock {
    pub block: Block,
    pub receipts: Vec<Receipt>,
    pub post_state: WorldState,
}

enum Calls<'a> {
    Live(&'a dyn ExcallPort),
    Recorded(&'a Block),
    DryRun,
}

struct TxRun {
    receipt: Receipt,
    outcome: ExecOutcome,
}

struct TracingPort<'a> {
    inner: &'a dyn ExcallPort,
    tx_index: u32,
    trace: &'a Mutex<Vec<FinalizeEvent>>,
}

impl ExcallPort for TracingPort<'_> {
    fn call(&self, request_uri: &str, nonce: &Nonce) -> Result<VerifiableExternalCall, PortError> {
        {
            let mut t = self.trace.lock().expect("trace lock");
            let call_index =
                t.iter().filter(|e| matches!(e, FinalizeEvent::CallIssued { tx_index, .. } if *tx_index == self.tx_index)).count();
            t.push(FinalizeEvent::CallIssued { tx_index: self.tx_index, call_index: call_index as u32, uri: request_uri.into() });
        }
        self.inner.call(request_uri, nonce)
    }
}

pub fn genesis_block(config: &ChainConfig) -> Block {
    let header = BlockHeader {
        parent_digest: config.digest(),
        number: 0,
        timestamp: config.genesis_timestamp,
        tx_root: tx_root(&[]),
        intent_root: intent_root(&[]),
        state_root: WorldState::new().state_root(),
        sealer: Address::default(),
    };
    Block { header, transactions: Vec::new(), excall_extension: Vec::new(), seal: Vec::new() }
}

pub fn contract_address(sender: &Address, account_nonce: u64) -> Address {
    Address::from_digest(&hash_parts(&[b"EXCALL-DEPLOY", &sender.0, &account_nonce.to_be_bytes()]))
}

fn seal_message(block: &Block) -> Vec<u8> {
    let mut m = SEAL_DOMAIN.to_vec();
    m.extend_from_slice(&sealed_digest(block).0);
    m
}

pub fn seal_block(config: &ChainConfig, finalized: FinalizedBlock, key: &KeyPair) -> Result<FinalizedBlock, ChainError> {
    let number = finalized.block.header.number;
    if config.sealer_for(number) != key.public_key() {
        return Err(ChainError::OutOfTurn { number });
    }
    let mut f = finalized;
    f.block.seal = key.sign(&seal_message(&f.block));
    Ok(f)
}

/// Checks that the in-turn authority sealed the block.
pub fn verify_seal(config: &ChainConfig, block: &Block) -> Result<(), RejectReason> {
    let expected = config.sealer_for(block.header.number);
    if block.header.sealer != Address::from_public_key(&expected) {
        return Err(RejectReason::OutOfTurnSealer);
    }
    if !verify_raw(&expected, &seal_message(block), &block.seal) {
        return Err(RejectReason::BadSeal);
    }
    Ok(())
}

fn tuple_reject(tx_index: u32, call_index: u32, fault: TupleFault) -> RejectReason {
    match fault {
        TupleFault::UnknownOraclePublicKey => RejectReason::UnknownOraclePublicKey { tx_index, call_index },
        TupleFault::NonceMismatch => RejectReason::NonceMismatch { tx_index, call_index },
        TupleFault::UriMismatch => RejectReason::UriMismatch { tx_index, call_index },
        TupleFault::InvalidSignature => RejectReason::InvalidSignature { tx_index, call_index },
    }
}

#[derive(Clone, Copy)]
struct TxCalls<'a> {
    records: Option<&'a [CallRecord]>,
    nonces: NonceSource,
    port: Option<&'a dyn ExcallPort>,
}

fn context<'a>(
    config: &'a ChainConfig,
    caller: Address,
    contract: Address,
    input: &'a [u8],
    c: TxCalls<'a>,
    env: BlockEnv,
) -> ExecContext<'a> {
    let keys = &config.oracle_keys;
    let ctx = match (c.port, c.records) {
        (Some(port), _) => ExecContext::finalize(caller, contract, input, keys, port, c.nonces),
        (None, Some(records)) => ExecContext::verify(caller, contract, input, keys, records, c.nonces),
        (None, None) => ExecContext::dry_run(caller, contract, input, keys),
    };
    ctx.with_block(env).with_limits(config.limits())
}

fn rejected_outcome(status: ReceiptStatus) -> ExecOutcome {
    ExecOutcome {
        status,
        events: Vec::new(),
        performed: Vec::new(),
        output: Vec::new(),
        steps: 0,
        intentions: Vec::new(),
        fault: Some(ExecFault::BadInput),
    }
}

/// Input is an encoded program followed by constructor argument words.
fn deploy(
    config: &ChainConfig,
    state: &mut WorldState,
    tx: &Transaction,
    c: TxCalls<'_>,
    env: BlockEnv,
) -> ExecOutcome {
    let addr = contract_address(&tx.sender, tx.account_nonce);
    let mut r = Reader::new(&tx.input);
    let Ok(program) = ContractProgram::decode_from(&mut r) else {
        return rejected_outcome(ReceiptStatus::FailedExec);
    };
    let args = r.remaining();
    if state.contract(&addr).is_some() {
        return rejected_outcome(ReceiptStatus::FailedExec);
    }
    let ctor = selector("constructor").expect("non-empty name");
    let mut storage = BTreeMap::new();
    let mut outcome = if program.entry(&ctor).is_some() {
        let mut input = ctor.to_vec();
        input.extend_from_slice(args);
        execute(&program, &context(config, tx.sender, addr, &input, c, env), &mut storage)
    } else if args.is_empty() {
        ExecOutcome { fault: None, status: ReceiptStatus::Success, ..rejected_outcome(ReceiptStatus::Success) }
    } else {
        rejected_outcome(ReceiptStatus::FailedExec)
    };
    if outcome.status.is_success() {
        state.insert_contract(addr, program, storage);
        outcome.output = address_word(&addr).to_vec();
    }
    outcome
}

/// Executes `txs` in order on `state`. Fails only on block-level faults.
fn run_txs(
    config: &ChainConfig,
    state: &mut WorldState,
    header: &BlockHeader,
    txs: &[Transaction],
    calls: Calls<'_>,
    trace: Option<&Mutex<Vec<FinalizeEvent>>>,
) -> Result<Vec<TxRun>, RejectReason> {
    let ih = match calls {
        Calls::DryRun => None,
        _ => Some(header_intention_hash(header)),
    };
    let env = BlockEnv { number: header.number, timestamp: header.timestamp, parent_digest: header.parent_digest };
    let mut runs = Vec::with_capacity(txs.len());
    for (i, tx) in txs.iter().enumerate() {
        let tx_index = i as u32;
        if tx.account_nonce != state.account_nonce(&tx.sender) {
            return Err(RejectReason::BadAccountNonce { tx_index });
        }
        if tx.mode == TxMode::SealerExecutes && !tx.excalls.is_empty() {
            return Err(RejectReason::UnexpectedTxExcalls { tx_index });
        }
        state.set_account_nonce(tx.sender, tx.account_nonce + 1);

        let attached: Vec<CallRecord>;
        let recorded: Vec<CallRecord>;
        let tracing: TracingPort<'_>;
        let c = match tx.mode {
            TxMode::InitiatorAttached => {
                attached = tx.excalls.iter().cloned().map(CallRecord::Verified).collect();
                TxCalls {
                    records: Some(&attached),
                    nonces: NonceSource::Attached { sender: tx.sender, account_nonce: tx.account_nonce },
                    port: None,
                }
            }
            TxMode::SealerExecutes => {
                let nonces = ih.map_or(NonceSource::Undetermined, |h| NonceSource::Block { intention_hash: h, tx_index });
                match calls {
                    Calls::DryRun => TxCalls { records: None, nonces, port: None },
                    Calls::Recorded(block) => {
                        recorded = block.records_for(tx_index);
                        TxCalls { records: Some(&recorded), nonces, port: None }
                    }
                    Calls::Live(p) => {
                        let port = match trace {
                            Some(trace) => {
                                tracing = TracingPort { inner: p, tx_index, trace };
                                &tracing as &dyn ExcallPort
                            }
                            None => p,
                        };
                        TxCalls { records: None, nonces, port: Some(port) }
                    }
                }
            }
        };

        let outcome = match tx.target {
            TxTarget::Contract(addr) => match state.contract_mut(&addr) {
                None => rejected_outcome(ReceiptStatus::FailedExec),
                Some(account) => {
                    let program = account.program.clone();
                    execute(&program, &context(config, tx.sender, addr, &tx.input, c, env), &mut account.storage)
                }
            },
            TxTarget::Deploy => deploy(config, state, tx, c, env),
        };
        let excall_count = match tx.mode {
            TxMode::SealerExecutes => outcome.performed.len() as u32,
            TxMode::InitiatorAttached => 0,
        };
        let receipt = Receipt {
            tx_digest: tx.identity(),
            status: outcome.status,
            events: outcome.events.clone(),
            excall_count,
            output: outcome.output.clone(),
        };
        runs.push(TxRun { receipt, outcome });
    }
    Ok(runs)
}

fn header_intention_hash(header: &BlockHeader) -> Digest {
    intention_hash(&Block { header: header.clone(), transactions: Vec::new(), excall_extension: Vec::new(), seal: Vec::new() })
}

/// Dry-runs `txs` on a scratch copy of `state` and lists the first external
/// call each transaction would make.
fn intentions_for(config: &ChainConfig, state: &WorldState, header: &BlockHeader, txs: &[Transaction]) -> Result<Vec<Intention>, RejectReason> {
    let mut scratch = state.clone();
    let runs = run_txs(config, &mut scratch, header, txs, Calls::DryRun, None)?;
    let mut out = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        if txs[i].mode != TxMode::SealerExecutes {
            continue;
        }
        for (call_index, uri_template) in run.outcome.intentions.iter().enumerate() {
            out.push(Intention { tx_index: i as u32, call_index: call_index as u32, uri_template: uri_template.clone() });
        }
    }
    Ok(out)
}

/// Ordering, uniqueness and contiguity of extension entries.
fn check_extension_shape(block: &Block) -> Result<(), RejectReason> {
    let mut prev: Option<(u32, u32)> = None;
    let mut terminated = false;
    for e in &block.excall_extension {
        let key = (e.tx_index, e.call_index);
        let tx = block
            .transactions
            .get(e.tx_index as usize)
            .filter(|t| t.mode == TxMode::SealerExecutes)
            .ok_or(RejectReason::ExtraExtensionEntry { tx_index: e.tx_index, call_index: e.call_index })?;
        let _ = tx;
        let expected_call = match prev {
            Some(p) if p == key => return Err(RejectReason::DuplicateExtensionEntry { tx_index: e.tx_index, call_index: e.call_index }),
            Some(p) if p > key => return Err(RejectReason::MalformedExtension),
            Some((t, c)) if t == e.tx_index => {
                if terminated {
                    return Err(RejectReason::ExtraExtensionEntry { tx_index: e.tx_index, call_index: e.call_index });
                }
                c + 1
            }
            _ => 0,
        };
        if e.call_index != expected_call {
            return Err(RejectReason::MissingExtensionEntry { tx_index: e.tx_index, call_index: expected_call });
        }
        terminated = !matches!(e.record, CallRecord::Verified(_));
        prev = Some(key);
    }
    Ok(())
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ChainStats {
    pub blocks: u64,
    pub transactions: u64,
    pub failed_receipts: u64,
    pub excall_records: u64,
    pub no_response_records: u64,
}

/// One node's view of the chain: the verified block sequence and its state.
pub struct Chain {
    config: ChainConfig,
    blocks: Vec<Block>,
    receipts: Vec<Vec<Receipt>>,
    receipt_index: HashMap<Digest, (u64, u32)>,
    state: WorldState,
    log: Option<BlockLog>,
    halted: bool,
    stats: ChainStats,
}

impl Chain {
    pub fn new(config: ChainConfig) -> Result<Self, ChainError> {
        config.validate()?;
        let genesis = genesis_block(&config);
        Ok(Chain {
            config,
            blocks: vec![genesis],
            receipts: vec![Vec::new()],
            receipt_index: HashMap::new(),
            state: WorldState::new(),
            log: None,
            halted: false,
            stats: ChainStats::default(),
        })
    }

    /// A chain persisting every committed block to `log`.
    pub fn with_log(config: ChainConfig, log: BlockLog) -> Result<Self, ChainError> {
        let mut c = Self::new(config)?;
        c.log = Some(log);
        Ok(c)
    }

    /// Rebuilds a chain by verifying and applying every block in the log at
    /// `path`, then keeps appending to it.
    pub fn open(config: ChainConfig, path: &Path) -> Result<Self, ChainError> {
        let mut c = Self::new(config)?;
        if path.exists() {
            for block in read_log(path)? {
                c.apply_block(block)?;
            }
        }
        c.log = Some(BlockLog::append(path).map_err(LogError::Io)?);
        Ok(c)
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn genesis(&self) -> &Block {
        &self.blocks[0]
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("genesis is always present")
    }

    pub fn block(&self, number: u64) -> Option<&Block> {
        self.blocks.get(number as usize)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn receipts(&self, number: u64) -> Option<&[Receipt]> {
        self.receipts.get(number as usize).map(Vec::as_slice)
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn stats(&self) -> ChainStats {
        self.stats
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    /// Orders `candidates` into a block on top of the head and dry-runs them
    /// to fix the intention root. Transactions that do not fit the current
    /// account nonces are left out.
    pub fn build_block(&self, candidates: Vec<Transaction>, now: u64, sealer: Address) -> Result<UnsealedBlock, ChainError> {
        self.check_live()?;
        let parent = self.head();
        let mut expected: HashMap<Address, u64> = HashMap::new();
        let mut txs = Vec::new();
        for tx in candidates {
            if txs.len() >= self.config.max_txs_per_block {
                break;
            }
            let next = expected.entry(tx.sender).or_insert_with(|| self.state.account_nonce(&tx.sender));
            if tx.account_nonce != *next || (tx.mode == TxMode::SealerExecutes && !tx.excalls.is_empty()) {
                debug!("skipping tx from {} with nonce {}", tx.sender, tx.account_nonce);
                continue;
            }
            *next += 1;
            txs.push(tx);
        }
        let mut header = BlockHeader {
            parent_digest: parent.digest(),
            number: parent.header.number + 1,
            timestamp: now.max(parent.header.timestamp + self.config.block_period_ms),
            tx_root: tx_root(&txs),
            intent_root: Digest::ZERO,
            state_root: Digest::ZERO,
            sealer,
        };
        let intentions = intentions_for(&self.config, &self.state, &header, &txs).map_err(ChainError::Rejected)?;
        header.intent_root = intent_root(&intentions);
        Ok(UnsealedBlock {
            block: Block { header, transactions: txs, excall_extension: Vec::new(), seal: Vec::new() },
            intentions,
        })
    }

    /// Fixes the intention hash, then executes with a live port, filling the
    /// extension and the state root.
    pub fn finalize_excalls(&self, unsealed: UnsealedBlock, port: &dyn ExcallPort) -> Result<FinalizedBlock, ChainError> {
        self.check_live()?;
        let mut block = unsealed.block;
        let trace = Mutex::new(vec![FinalizeEvent::IntentionFixed(header_intention_hash(&block.header))]);
        let mut post = self.state.clone();
        let runs = run_txs(&self.config, &mut post, &block.header, &block.transactions, Calls::Live(port), Some(&trace))
            .map_err(ChainError::Rejected)?;
        let mut receipts = Vec::with_capacity(runs.len());
        for (i, run) in runs.into_iter().enumerate() {
            if block.transactions[i].mode == TxMode::SealerExecutes {
                for (call_index, record) in run.outcome.performed.into_iter().enumerate() {
                    block.excall_extension.push(ExtensionEntry { tx_index: i as u32, call_index: call_index as u32, record });
                }
            }
            receipts.push(run.receipt);
        }
        block.header.state_root = post.state_root();
        let mut trace = trace.into_inner().expect("trace lock");
        trace.push(FinalizeEvent::StateRootComputed(block.header.state_root));
        Ok(FinalizedBlock { block, receipts, post_state: post, trace })
    }

    pub fn seal(&self, finalized: FinalizedBlock, key: &KeyPair) -> Result<FinalizedBlock, ChainError> {
        seal_block(&self.config, finalized, key)
    }

    /// Full validation of a block against the current head, using only the
    /// recorded extension.
    pub fn verify_block(&self, block: &Block) -> Result<VerifiedBlock, RejectReason> {
        let parent = self.head();
        let h = &block.header;
        if h.parent_digest != parent.digest() {
            return Err(RejectReason::ParentMismatch);
        }
        if h.number != parent.header.number + 1 {
            return Err(RejectReason::BadNumber);
        }
        if h.timestamp < parent.header.timestamp + self.config.block_period_ms {
            return Err(RejectReason::TimestampTooEarly);
        }
        verify_seal(&self.config, block)?;
        if block.transactions.len() > self.config.max_txs_per_block {
            return Err(RejectReason::TooManyTransactions);
        }
        if h.tx_root != tx_root(&block.transactions) {
            return Err(RejectReason::TxRootMismatch);
        }
        let intentions = intentions_for(&self.config, &self.state, h, &block.transactions)?;
        if h.intent_root != intent_root(&intentions) {
            return Err(RejectReason::IntentRootMismatch);
        }
        check_extension_shape(block)?;

        let ih = header_intention_hash(h);
        let templates: HashMap<(u32, u32), &str> =
            intentions.iter().map(|i| ((i.tx_index, i.call_index), i.uri_template.as_str())).collect();
        for e in &block.excall_extension {
            let CallRecord::Verified(t) = &e.record else { continue };
            let nonce = derive_call_nonce(&ih, e.tx_index, e.call_index);
            // Calls past the first are matched against their template during replay.
            let uri = templates
                .get(&(e.tx_index, e.call_index))
                .map_or_else(|| t.request_uri.clone(), |tpl| substitute_nonce(tpl, &nonce));
            check_tuple(t, &nonce, &uri, &self.config.oracle_keys).map_err(|f| tuple_reject(e.tx_index, e.call_index, f))?;
        }

        let mut post = self.state.clone();
        let runs = run_txs(&self.config, &mut post, h, &block.transactions, Calls::Recorded(block), None)?;
        let mut receipts = Vec::with_capacity(runs.len());
        for (i, run) in runs.into_iter().enumerate() {
            let tx_index = i as u32;
            if block.transactions[i].mode == TxMode::SealerExecutes {
                match run.outcome.fault {
                    Some(ExecFault::MissingRecord { call_index }) => {
                        return Err(RejectReason::MissingExtensionEntry { tx_index, call_index })
                    }
                    Some(ExecFault::Tuple { call_index, fault }) => return Err(tuple_reject(tx_index, call_index, fault)),
                    _ => {}
                }
                let consumed = run.outcome.performed.len();
                if block.excall_extension.iter().filter(|e| e.tx_index == tx_index).count() > consumed {
                    return Err(RejectReason::ExtraExtensionEntry { tx_index, call_index: consumed as u32 });
                }
            }
            receipts.push(run.receipt);
        }
        if post.state_root() != h.state_root {
            return Err(RejectReason::StateRootMismatch);
        }
        Ok(VerifiedBlock { block: block.clone(), receipts, post_state: post })
    }

    /// Verifies then commits `block`.
    pub fn apply_block(&mut self, block: Block) -> Result<(), ChainError> {
        self.check_live()?;
        let verified = self.verify_block(&block).map_err(ChainError::Rejected)?;
        self.commit(verified)
    }

    /// Commits a block this node finalized and sealed itself.
    pub fn commit_own(&mut self, sealed: FinalizedBlock) -> Result<(), ChainError> {
        self.check_live()?;
        if sealed.block.header.parent_digest != self.head().digest() {
            return Err(ChainError::Rejected(RejectReason::ParentMismatch));
        }
        verify_seal(&self.config, &sealed.block).map_err(ChainError::Rejected)?;
        self.commit(VerifiedBlock { block: sealed.block, receipts: sealed.receipts, post_state: sealed.post_state })
    }

    fn check_live(&self) -> Result<(), ChainError> {
        if self.halted {
            Err(ChainError::Halted)
        } else {
            Ok(())
        }
    }

    fn commit(&mut self, v: VerifiedBlock) -> Result<(), ChainError> {
        if let Some(log) = self.log.as_mut() {
            if let Err(e) = log.write(&v.block) {
                warn!("block log write failed, halting: {e}");
                self.halted = true;
                return Err(ChainError::LogWrite(e.to_string()));
            }
        }
        let number = v.block.header.number;
        for (i, r) in v.receipts.iter().enumerate() {
            self.receipt_index.insert(r.tx_digest, (number, i as u32));
            if !r.status.is_success() {
                self.stats.failed_receipts += 1;
            }
        }
        self.stats.blocks += 1;
        self.stats.transactions += v.block.transactions.len() as u64;
        self.stats.excall_records += v.block.excall_extension.len() as u64;
        self.stats.no_response_records +=
            v.block.excall_extension.iter().filter(|e| e.record == CallRecord::NoResponse).count() as u64;
        self.blocks.push(v.block);
        self.receipts.push(v.receipts);
        self.state = v.post_state;
        Ok(())
    }
}

impl ChainQuery for Chain {
    fn head_header(&self) -> BlockHeader {
        self.head().header.clone()
    }

    fn height(&self) -> u64 {
        self.head().header.number
    }

    fn receipt(&self, tx: &Digest) -> Option<ReceiptRecord> {
        let (block_number, tx_index) = *self.receipt_index.get(tx)?;
        let receipt = self.receipts[block_number as usize][tx_index as usize].clone();
        Some(ReceiptRecord { receipt, block_number, tx_index })
    }

    fn events_by_topic(&self, topic: &Word, from_block: u64) -> Vec<EventRecord> {
        let mut out = Vec::new();
        for (n, receipts) in self.receipts.iter().enumerate().skip(from_block as usize) {
            for (i, r) in receipts.iter().enumerate() {
                for e in r.events.iter().filter(|e| &e.topic == topic) {
                    out.push(EventRecord { block_number: n as u64, tx_index: i as u32, event: e.clone() });
                }
            }
        }
        out
    }

    fn account_nonce(&self, a: &Address) -> u64 {
        self.state.account_nonce(a)
    }

    fn storage_at(&self, contract: &Address, key: &Word) -> Word {
        self.state.storage_at(contract, key)
    }
}
