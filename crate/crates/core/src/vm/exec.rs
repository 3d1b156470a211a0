//! Interpreter.
//!
//! The same program runs in three modes. FINALIZE is the sealer's pass and the
//! only one holding a live external-call port. VERIFY replays the tuples the
//! sealer recorded, checking each one, and never touches the network. DRY_RUN
//! is used while building a block to discover which transactions will need a
//! call; it stops at the first EXCALL.

use std::collections::BTreeMap;

use thiserror::Error;

use super::abi::{self, Word, RESPONSE_REGISTER};
use super::opcode::{decode_at, Instr, Opcode};
use super::{ContractProgram, DEFAULT_MAX_EXCALLS, DEFAULT_STEP_LIMIT, MAX_STACK};
use crate::crypto::{verify_response, Digest};
use crate::types::{
    derive_attached_nonce, derive_call_nonce, substitute_nonce, Address, CallRecord, EventLog, Nonce, OracleKeys,
    ReceiptStatus, VerifiableExternalCall,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    Finalize,
    Verify,
    DryRun,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PortError {
    #[error("no response: {0}")]
    NoResponse(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

/// The sealer's capability to reach external services.
pub trait ExcallPort: Send + Sync {
    fn call(&self, request_uri: &str, nonce: &Nonce) -> Result<VerifiableExternalCall, PortError>;
}

impl<P: ExcallPort + ?Sized> ExcallPort for std::sync::Arc<P> {
    fn call(&self, request_uri: &str, nonce: &Nonce) -> Result<VerifiableExternalCall, PortError> {
        (**self).call(request_uri, nonce)
    }
}

/// Where EXCALL results come from.
#[derive(Clone, Copy)]
pub enum ExcallSource<'a> {
    Live(&'a dyn ExcallPort),
    Replay(&'a [CallRecord]),
    Unavailable,
}

/// How the nonce for the n-th call of a transaction is derived.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NonceSource {
    Block { intention_hash: Digest, tx_index: u32 },
    Attached { sender: Address, account_nonce: u64 },
    Undetermined,
}

impl NonceSource {
    pub fn nonce(&self, call_index: u32) -> Option<Nonce> {
        match *self {
            NonceSource::Block { intention_hash, tx_index } => Some(derive_call_nonce(&intention_hash, tx_index, call_index)),
            NonceSource::Attached { sender, account_nonce } => Some(derive_attached_nonce(&sender, account_nonce, call_index)),
            NonceSource::Undetermined => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct BlockEnv {
    pub number: u64,
    pub timestamp: u64,
    pub parent_digest: Digest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecLimits {
    pub step_limit: u64,
    pub max_excalls: u32,
}

impl Default for ExecLimits {
    fn default() -> Self {
        ExecLimits { step_limit: DEFAULT_STEP_LIMIT, max_excalls: DEFAULT_MAX_EXCALLS }
    }
}

pub struct ExecContext<'a> {
    pub caller: Address,
    pub contract: Address,
    pub input: &'a [u8],
    pub block: BlockEnv,
    pub keys: &'a OracleKeys,
    pub limits: ExecLimits,
    mode: ExecMode,
    source: ExcallSource<'a>,
    nonces: NonceSource,
}

impl<'a> ExecContext<'a> {
    fn base(caller: Address, contract: Address, input: &'a [u8], keys: &'a OracleKeys) -> Self {
        ExecContext {
            caller,
            contract,
            input,
            block: BlockEnv::default(),
            keys,
            limits: ExecLimits::default(),
            mode: ExecMode::DryRun,
            source: ExcallSource::Unavailable,
            nonces: NonceSource::Undetermined,
        }
    }

    /// Sealer pass with a live port.
    pub fn finalize(
        caller: Address,
        contract: Address,
        input: &'a [u8],
        keys: &'a OracleKeys,
        port: &'a dyn ExcallPort,
        nonces: NonceSource,
    ) -> Self {
        ExecContext { mode: ExecMode::Finalize, source: ExcallSource::Live(port), nonces, ..Self::base(caller, contract, input, keys) }
    }

    /// Sealer pass for a transaction whose calls were attached by the initiator.
    pub fn finalize_attached(
        caller: Address,
        contract: Address,
        input: &'a [u8],
        keys: &'a OracleKeys,
        attached: &'a [CallRecord],
        nonces: NonceSource,
    ) -> Self {
        ExecContext {
            mode: ExecMode::Finalize,
            source: ExcallSource::Replay(attached),
            nonces,
            ..Self::base(caller, contract, input, keys)
        }
    }

    /// Replay against recorded tuples. Holds no network capability.
    pub fn verify(
        caller: Address,
        contract: Address,
        input: &'a [u8],
        keys: &'a OracleKeys,
        recorded: &'a [CallRecord],
        nonces: NonceSource,
    ) -> Self {
        ExecContext { mode: ExecMode::Verify, source: ExcallSource::Replay(recorded), nonces, ..Self::base(caller, contract, input, keys) }
    }

    pub fn dry_run(caller: Address, contract: Address, input: &'a [u8], keys: &'a OracleKeys) -> Self {
        Self::base(caller, contract, input, keys)
    }

    pub fn with_block(mut self, block: BlockEnv) -> Self {
        self.block = block;
        self
    }

    pub fn with_limits(mut self, limits: ExecLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn mode(&self) -> ExecMode {
        self.mode
    }

    pub fn has_network(&self) -> bool {
        matches!(self.source, ExcallSource::Live(_))
    }
}

/// Why a recorded tuple was refused.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum TupleFault {
    #[error("no pinned key for the request uri, or key differs from the pinned one")]
    UnknownOraclePublicKey,
    #[error("request nonce differs from the derived nonce")]
    NonceMismatch,
    #[error("request uri does not match the program's template")]
    UriMismatch,
    #[error("signature does not verify")]
    InvalidSignature,
}

/// Checks a tuple against the expected nonce and uri and the pinned keys.
/// Key, nonce, uri and signature are checked in that order.
pub fn check_tuple(
    tuple: &VerifiableExternalCall,
    expected_nonce: &Nonce,
    expected_uri: &str,
    keys: &OracleKeys,
) -> Result<(), TupleFault> {
    if keys.key_for(&tuple.request_uri) != Some(tuple.public_key) {
        return Err(TupleFault::UnknownOraclePublicKey);
    }
    if &tuple.request_nonce != expected_nonce {
        return Err(TupleFault::NonceMismatch);
    }
    if tuple.request_uri != expected_uri {
        return Err(TupleFault::UriMismatch);
    }
    if tuple.check_shape().is_err()
        || !verify_response(&tuple.public_key, &tuple.response, &tuple.request_nonce, &tuple.signature)
    {
        return Err(TupleFault::InvalidSignature);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecFault {
    StepLimit,
    StackUnderflow { pc: usize },
    StackOverflow { pc: usize },
    BadInput,
    UnknownSelector,
    Reverted { pc: usize },
    TooManyExcalls,
    ReservedKeyWrite,
    /// VERIFY reached an EXCALL with no recorded tuple left.
    MissingRecord { call_index: u32 },
    Tuple { call_index: u32, fault: TupleFault },
    NoResponse { call_index: u32, detail: String },
    /// The recorded outcome says the service answered with an unverifiable reply.
    RecordedUnverified { call_index: u32 },
    DryRunExcall,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecOutcome {
    pub status: ReceiptStatus,
    pub events: Vec<EventLog>,
    /// FINALIZE: records produced by the port. VERIFY: records consumed.
    pub performed: Vec<CallRecord>,
    pub output: Vec<u8>,
    pub steps: u64,
    /// URI templates reached in DRY_RUN.
    pub intentions: Vec<String>,
    pub fault: Option<ExecFault>,
}

struct Machine<'c, 'a> {
    ctx: &'c ExecContext<'a>,
    program: &'c ContractProgram,
    storage: &'c BTreeMap<Word, Word>,
    writes: BTreeMap<Word, Word>,
    stack: Vec<Word>,
    events: Vec<EventLog>,
    performed: Vec<CallRecord>,
    intentions: Vec<String>,
    response: Vec<u8>,
    output: Vec<u8>,
    steps: u64,
    calls: u32,
}

enum Halt {
    Fail(ReceiptStatus, ExecFault),
}

impl<'c, 'a> Machine<'c, 'a> {
    fn pop(&mut self, pc: usize) -> Result<Word, Halt> {
        self.stack.pop().ok_or(Halt::Fail(ReceiptStatus::FailedExec, ExecFault::StackUnderflow { pc }))
    }

    fn push(&mut self, w: Word, pc: usize) -> Result<(), Halt> {
        if self.stack.len() >= MAX_STACK {
            return Err(Halt::Fail(ReceiptStatus::FailedExec, ExecFault::StackOverflow { pc }));
        }
        self.stack.push(w);
        Ok(())
    }

    fn load(&self, key: &Word) -> Word {
        if *key == RESPONSE_REGISTER {
            let mut w = [0u8; 32];
            let n = self.response.len().min(32);
            w[..n].copy_from_slice(&self.response[..n]);
            return w;
        }
        self.writes.get(key).or_else(|| self.storage.get(key)).copied().unwrap_or([0u8; 32])
    }

    fn run(&mut self, entry: usize) -> Result<(), Halt> {
        let code = self.program.bytecode();
        let mut pc = entry;
        loop {
            if self.steps >= self.ctx.limits.step_limit {
                return Err(Halt::Fail(ReceiptStatus::FailedExec, ExecFault::StepLimit));
            }
            self.steps += 1;
            if pc >= code.len() {
                // Falling off the end behaves like STOP.
                return Ok(());
            }
            let (instr, next) = decode_at(code, pc).expect("validated program");
            let mut jump_to = None;
            match instr {
                Instr::Push8(v) => self.push(abi::u64_word(v as u64), pc)?,
                Instr::PushB(bytes) => {
                    let mut w = [0u8; 32];
                    w[32 - bytes.len()..].copy_from_slice(bytes);
                    self.push(w, pc)?;
                }
                Instr::Dup(depth) => {
                    let d = depth as usize;
                    if d >= self.stack.len() {
                        return Err(Halt::Fail(ReceiptStatus::FailedExec, ExecFault::StackUnderflow { pc }));
                    }
                    let w = self.stack[self.stack.len() - 1 - d];
                    self.push(w, pc)?;
                }
                Instr::Jump(t) => jump_to = Some(t as usize),
                Instr::JumpI(t) => {
                    if self.pop(pc)? != [0u8; 32] {
                        jump_to = Some(t as usize);
                    }
                }
                Instr::Emit(n) => {
                    let topic = self.pop(pc)?;
                    let mut words = Vec::with_capacity(n as usize);
                    for _ in 0..n {
                        words.push(self.pop(pc)?);
                    }
                    let data = words.iter().rev().flat_map(|w| w.iter().copied()).collect();
                    self.events.push(EventLog { contract: self.ctx.contract, topic, data });
                }
                Instr::Excall(template) => {
                    let first = self.excall(template)?;
                    self.push(abi::u64_word(first as u64), pc)?;
                }
                Instr::Simple(op) => match op {
                    Opcode::Stop => {
                        if let Some(top) = self.stack.last() {
                            self.output = top.to_vec();
                        }
                        return Ok(());
                    }
                    Opcode::Revert => return Err(Halt::Fail(ReceiptStatus::FailedExec, ExecFault::Reverted { pc })),
                    Opcode::Pop => {
                        self.pop(pc)?;
                    }
                    Opcode::Add | Opcode::Sub | Opcode::Eq | Opcode::Lt => {
                        let b = self.pop(pc)?;
                        let a = self.pop(pc)?;
                        let r = match op {
                            Opcode::Add => abi::add(&a, &b),
                            Opcode::Sub => abi::sub(&a, &b),
                            Opcode::Eq => abi::bool_word(a == b),
                            _ => abi::bool_word(a < b),
                        };
                        self.push(r, pc)?;
                    }
                    Opcode::Not => {
                        let a = self.pop(pc)?;
                        self.push(abi::bool_word(a == [0u8; 32]), pc)?;
                    }
                    Opcode::Caller => self.push(abi::address_word(&self.ctx.caller), pc)?,
                    Opcode::SLoad => {
                        let k = self.pop(pc)?;
                        let v = self.load(&k);
                        self.push(v, pc)?;
                    }
                    Opcode::SStore => {
                        let k = self.pop(pc)?;
                        let v = self.pop(pc)?;
                        if k == RESPONSE_REGISTER {
                            return Err(Halt::Fail(ReceiptStatus::FailedExec, ExecFault::ReservedKeyWrite));
                        }
                        self.writes.insert(k, v);
                    }
                    _ => unreachable!("immediate-carrying opcodes decode to dedicated variants"),
                },
            }
            pc = jump_to.unwrap_or(next);
        }
    }

    /// Performs or replays one EXCALL and returns the first response byte.
    fn excall(&mut self, template: &str) -> Result<u8, Halt> {
        let call_index = self.calls;
        if call_index >= self.ctx.limits.max_excalls {
            return Err(Halt::Fail(ReceiptStatus::FailedExec, ExecFault::TooManyExcalls));
        }
        self.calls += 1;
        let unverified = |fault| Halt::Fail(ReceiptStatus::FailedExcallUnverified, fault);

        let tuple = match self.ctx.source {
            ExcallSource::Unavailable => {
                self.intentions.push(template.to_string());
                return Err(Halt::Fail(ReceiptStatus::FailedExcallNoResponse, ExecFault::DryRunExcall));
            }
            ExcallSource::Live(port) => {
                let nonce = self.ctx.nonces.nonce(call_index).expect("live calls have a nonce source");
                let uri = substitute_nonce(template, &nonce);
                match port.call(&uri, &nonce) {
                    Err(PortError::NoResponse(detail)) => {
                        self.performed.push(CallRecord::NoResponse);
                        return Err(Halt::Fail(
                            ReceiptStatus::FailedExcallNoResponse,
                            ExecFault::NoResponse { call_index, detail },
                        ));
                    }
                    Err(PortError::Malformed(_)) => {
                        self.performed.push(CallRecord::Unverified);
                        return Err(unverified(ExecFault::RecordedUnverified { call_index }));
                    }
                    Ok(t) => {
                        if let Err(fault) = check_tuple(&t, &nonce, &uri, self.ctx.keys) {
                            self.performed.push(CallRecord::Unverified);
                            return Err(unverified(ExecFault::Tuple { call_index, fault }));
                        }
                        self.performed.push(CallRecord::Verified(t.clone()));
                        t
                    }
                }
            }
            ExcallSource::Replay(records) => {
                let Some(record) = records.get(call_index as usize) else {
                    return Err(unverified(ExecFault::MissingRecord { call_index }));
                };
                self.performed.push(record.clone());
                match record {
                    CallRecord::NoResponse => {
                        return Err(Halt::Fail(
                            ReceiptStatus::FailedExcallNoResponse,
                            ExecFault::NoResponse { call_index, detail: "recorded".into() },
                        ))
                    }
                    CallRecord::Unverified => return Err(unverified(ExecFault::RecordedUnverified { call_index })),
                    CallRecord::Verified(t) => {
                        let Some(nonce) = self.ctx.nonces.nonce(call_index) else {
                            return Err(unverified(ExecFault::Tuple { call_index, fault: TupleFault::NonceMismatch }));
                        };
                        let uri = substitute_nonce(template, &nonce);
                        if let Err(fault) = check_tuple(t, &nonce, &uri, self.ctx.keys) {
                            return Err(unverified(ExecFault::Tuple { call_index, fault }));
                        }
                        t.clone()
                    }
                }
            }
        };
        self.response = tuple.response;
        Ok(self.response.first().copied().unwrap_or(0))
    }
}

/// Runs `program` with `ctx`. On SUCCESS the writes are committed to
/// `storage`; on any failure `storage` is left untouched.
pub fn execute(program: &ContractProgram, ctx: &ExecContext<'_>, storage: &mut BTreeMap<Word, Word>) -> ExecOutcome {
    let fail = |status, fault| ExecOutcome {
        status,
        events: Vec::new(),
        performed: Vec::new(),
        output: Vec::new(),
        steps: 0,
        intentions: Vec::new(),
        fault: Some(fault),
    };
    if ctx.input.len() < 4 || !(ctx.input.len() - 4).is_multiple_of(32) {
        return fail(ReceiptStatus::FailedExec, ExecFault::BadInput);
    }
    let selector: [u8; 4] = ctx.input[..4].try_into().expect("length checked");
    let Some(entry) = program.entry(&selector) else {
        return fail(ReceiptStatus::FailedExec, ExecFault::UnknownSelector);
    };
    let args = abi::data_words(&ctx.input[4..]);
    if args.len() > MAX_STACK {
        return fail(ReceiptStatus::FailedExec, ExecFault::BadInput);
    }

    let mut m = Machine {
        ctx,
        program,
        storage,
        writes: BTreeMap::new(),
        stack: args,
        events: Vec::new(),
        performed: Vec::new(),
        intentions: Vec::new(),
        response: Vec::new(),
        steps: 0,
        calls: 0,
        output: Vec::new(),
    };
    let halt = m.run(entry);
    let Machine { writes, events, performed, intentions, steps, output, .. } = m;
    match halt {
        Ok(()) => {
            for (k, v) in writes {
                if v == [0u8; 32] {
                    storage.remove(&k);
                } else {
                    storage.insert(k, v);
                }
            }
            ExecOutcome { status: ReceiptStatus::Success, events, performed, output, steps, intentions, fault: None }
        }
        Err(Halt::Fail(status, fault)) => {
            ExecOutcome { status, events: Vec::new(), performed, output: Vec::new(), steps, intentions, fault: Some(fault) }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::crypto::{keygen, sign_response, KeyPair};
    use crate::vm::abi::{call_input, winnings_key};
    use crate::vm::assemble;

    const BET: &str = r#"
.entry betEXCALL
    EXCALL "http://oracle.test/excallrand?nonce={nonce}"
    PUSH8 '1'
    EQ
    JUMPI won
    STOP
won:
    CALLER
    PUSHB 0x57494e530000000000000000
    ADD
    DUP 0
    SLOAD
    PUSH8 1
    ADD
    DUP 1
    SSTORE
    POP
    STOP
"#;

    struct MockPort {
        key: KeyPair,
        answer: Vec<u8>,
        calls: AtomicUsize,
        offline: bool,
    }

    impl MockPort {
        fn new(answer: &[u8]) -> Self {
            MockPort { key: oracle_key(), answer: answer.to_vec(), calls: AtomicUsize::new(0), offline: false }
        }
    }

    impl ExcallPort for MockPort {
        fn call(&self, request_uri: &str, nonce: &Nonce) -> Result<VerifiableExternalCall, PortError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self.offline {
                return Err(PortError::NoResponse("offline".into()));
            }
            Ok(VerifiableExternalCall {
                request_uri: request_uri.to_string(),
                request_nonce: *nonce,
                public_key: self.key.public_key(),
                response: self.answer.clone(),
                signature: sign_response(&self.key, &self.answer, nonce),
            })
        }
    }

    fn oracle_key() -> KeyPair {
        keygen(&[42; 32]).unwrap()
    }

    fn keys() -> OracleKeys {
        OracleKeys::new().with("http://oracle.test/", oracle_key().public_key())
    }

    const PUNTER: Address = Address([7; 20]);
    const CONTRACT: Address = Address([8; 20]);

    fn nonces() -> NonceSource {
        NonceSource::Block { intention_hash: Digest([1; 32]), tx_index: 0 }
    }

    fn finalize_bet(port: &MockPort, storage: &mut BTreeMap<Word, Word>) -> ExecOutcome {
        let program = assemble(BET).unwrap();
        let input = call_input("betEXCALL", &[]).unwrap();
        let keys = keys();
        let ctx = ExecContext::finalize(PUNTER, CONTRACT, &input, &keys, port, nonces());
        execute(&program, &ctx, storage)
    }

    fn verify_bet(recorded: &[CallRecord], storage: &mut BTreeMap<Word, Word>) -> ExecOutcome {
        let program = assemble(BET).unwrap();
        let input = call_input("betEXCALL", &[]).unwrap();
        let keys = keys();
        let ctx = ExecContext::verify(PUNTER, CONTRACT, &input, &keys, recorded, nonces());
        assert!(!ctx.has_network());
        execute(&program, &ctx, storage)
    }

    fn winnings(storage: &BTreeMap<Word, Word>) -> u64 {
        storage.get(&winnings_key(&PUNTER)).map_or(0, |w| abi::word_u64(w).unwrap())
    }

    #[test]
    fn finalize_win_increments_winnings() {
        let port = MockPort::new(b"1");
        let mut s = BTreeMap::new();
        let out = finalize_bet(&port, &mut s);
        assert_eq!(out.status, ReceiptStatus::Success);
        assert_eq!(winnings(&s), 1);
        assert_eq!(out.performed.len(), 1);
        assert_eq!(port.calls.load(Ordering::SeqCst), 1);
        let t = out.performed[0].tuple().unwrap();
        assert_eq!(t.request_nonce, derive_call_nonce(&Digest([1; 32]), 0, 0));
        assert!(t.request_uri.ends_with(&hex::encode(t.request_nonce)));
    }

    #[test]
    fn finalize_loss_leaves_winnings() {
        let port = MockPort::new(b"0");
        let mut s = BTreeMap::new();
        assert_eq!(finalize_bet(&port, &mut s).status, ReceiptStatus::Success);
        assert_eq!(winnings(&s), 0);
    }

    #[test]
    fn verify_replays_identically_without_network() {
        let port = MockPort::new(b"1");
        let mut sealer = BTreeMap::new();
        let fin = finalize_bet(&port, &mut sealer);
        let mut verifier = BTreeMap::new();
        let ver = verify_bet(&fin.performed, &mut verifier);
        assert_eq!(port.calls.load(Ordering::SeqCst), 1);
        assert_eq!(sealer, verifier);
        assert_eq!(fin.status, ver.status);
        assert_eq!(fin.events, ver.events);
        assert_eq!(fin.performed, ver.performed);
        // determinism
        let mut again = BTreeMap::new();
        assert_eq!(verify_bet(&fin.performed, &mut again), ver);
    }

    #[test]
    fn verify_rejects_flipped_response() {
        let port = MockPort::new(b"1");
        let mut s = BTreeMap::new();
        let mut rec = finalize_bet(&port, &mut s).performed;
        if let CallRecord::Verified(t) = &mut rec[0] {
            t.response[0] = b'0';
        }
        let mut v = BTreeMap::new();
        let out = verify_bet(&rec, &mut v);
        assert_eq!(out.status, ReceiptStatus::FailedExcallUnverified);
        assert_eq!(out.fault, Some(ExecFault::Tuple { call_index: 0, fault: TupleFault::InvalidSignature }));
        assert!(v.is_empty());
    }

    #[test]
    fn verify_missing_record() {
        let mut v = BTreeMap::new();
        let out = verify_bet(&[], &mut v);
        assert_eq!(out.status, ReceiptStatus::FailedExcallUnverified);
        assert_eq!(out.fault, Some(ExecFault::MissingRecord { call_index: 0 }));
    }

    #[test]
    fn verify_wrong_nonce_and_unknown_key() {
        let port = MockPort::new(b"1");
        let mut s = BTreeMap::new();
        let rec = finalize_bet(&port, &mut s).performed;
        let program = assemble(BET).unwrap();
        let input = call_input("betEXCALL", &[]).unwrap();
        let keys = keys();
        let other = NonceSource::Block { intention_hash: Digest([2; 32]), tx_index: 0 };
        let ctx = ExecContext::verify(PUNTER, CONTRACT, &input, &keys, &rec, other);
        let out = execute(&program, &ctx, &mut BTreeMap::new());
        assert_eq!(out.fault, Some(ExecFault::Tuple { call_index: 0, fault: TupleFault::NonceMismatch }));

        let empty = OracleKeys::new();
        let ctx = ExecContext::verify(PUNTER, CONTRACT, &input, &empty, &rec, nonces());
        let out = execute(&program, &ctx, &mut BTreeMap::new());
        assert_eq!(out.fault, Some(ExecFault::Tuple { call_index: 0, fault: TupleFault::UnknownOraclePublicKey }));
    }

    #[test]
    fn finalize_offline_records_no_response() {
        let mut port = MockPort::new(b"1");
        port.offline = true;
        let mut s = BTreeMap::new();
        let out = finalize_bet(&port, &mut s);
        assert_eq!(out.status, ReceiptStatus::FailedExcallNoResponse);
        assert_eq!(out.performed, vec![CallRecord::NoResponse]);
        assert!(s.is_empty());
        let v = verify_bet(&out.performed, &mut BTreeMap::new());
        assert_eq!(v.status, ReceiptStatus::FailedExcallNoResponse);
    }

    #[test]
    fn finalize_bad_signature_is_unverified() {
        struct Forger(MockPort);
        impl ExcallPort for Forger {
            fn call(&self, uri: &str, nonce: &Nonce) -> Result<VerifiableExternalCall, PortError> {
                let mut t = self.0.call(uri, nonce)?;
                t.signature[0] ^= 1;
                Ok(t)
            }
        }
        let port = Forger(MockPort::new(b"1"));
        let program = assemble(BET).unwrap();
        let input = call_input("betEXCALL", &[]).unwrap();
        let keys = keys();
        let ctx = ExecContext::finalize(PUNTER, CONTRACT, &input, &keys, &port, nonces());
        let mut s = BTreeMap::new();
        let out = execute(&program, &ctx, &mut s);
        assert_eq!(out.status, ReceiptStatus::FailedExcallUnverified);
        assert_eq!(out.performed, vec![CallRecord::Unverified]);
        assert!(s.is_empty());
    }

    #[test]
    fn dry_run_stops_at_excall_and_reports_template() {
        let program = assemble(BET).unwrap();
        let input = call_input("betEXCALL", &[]).unwrap();
        let keys = keys();
        let ctx = ExecContext::dry_run(PUNTER, CONTRACT, &input, &keys);
        assert_eq!(ctx.mode(), ExecMode::DryRun);
        assert!(!ctx.has_network());
        let out = execute(&program, &ctx, &mut BTreeMap::new());
        assert_eq!(out.status, ReceiptStatus::FailedExcallNoResponse);
        assert_eq!(out.intentions, vec!["http://oracle.test/excallrand?nonce={nonce}".to_string()]);
    }

    #[test]
    fn response_register_readable_not_writable() {
        let src = r#"
.entry f
    EXCALL "http://oracle.test/x?n={nonce}"
    POP
    PUSHB 0xffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffff
    SLOAD
    STOP
.entry g
    PUSH8 1
    PUSHB 0xffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffff
    SSTORE
    STOP
"#;
        let program = assemble(src).unwrap();
        let port = MockPort::new(b"hello");
        let keys = keys();
        let input = call_input("f", &[]).unwrap();
        let ctx = ExecContext::finalize(PUNTER, CONTRACT, &input, &keys, &port, nonces());
        let out = execute(&program, &ctx, &mut BTreeMap::new());
        assert_eq!(out.status, ReceiptStatus::Success);
        let mut expect = [0u8; 32];
        expect[..5].copy_from_slice(b"hello");
        assert_eq!(out.output, expect.to_vec());

        let input = call_input("g", &[]).unwrap();
        let ctx = ExecContext::dry_run(PUNTER, CONTRACT, &input, &keys);
        let out = execute(&program, &ctx, &mut BTreeMap::new());
        assert_eq!(out.fault, Some(ExecFault::ReservedKeyWrite));
    }

    #[test]
    fn step_limit_bounds_infinite_loop() {
        let program = assemble(".entry f\nloop:\nJUMP loop").unwrap();
        let input = call_input("f", &[]).unwrap();
        let keys = keys();
        let ctx = ExecContext::dry_run(PUNTER, CONTRACT, &input, &keys);
        let out = execute(&program, &ctx, &mut BTreeMap::new());
        assert_eq!(out.status, ReceiptStatus::FailedExec);
        assert_eq!(out.fault, Some(ExecFault::StepLimit));
        assert_eq!(out.steps, DEFAULT_STEP_LIMIT);
    }

    #[test]
    fn excall_cap() {
        let mut src = String::from(".entry f\n");
        for _ in 0..9 {
            src.push_str("EXCALL \"http://oracle.test/a?n={nonce}\"\nPOP\n");
        }
        src.push_str("STOP\n");
        let program = assemble(&src).unwrap();
        let port = MockPort::new(b"1");
        let keys = keys();
        let input = call_input("f", &[]).unwrap();
        let ctx = ExecContext::finalize(PUNTER, CONTRACT, &input, &keys, &port, nonces());
        let out = execute(&program, &ctx, &mut BTreeMap::new());
        assert_eq!(out.fault, Some(ExecFault::TooManyExcalls));
        assert_eq!(port.calls.load(Ordering::SeqCst), 8);
    }

    #[test]
    fn revert_discards_writes_and_events() {
        let src = ".entry f\nPUSH8 5\nPUSH8 1\nSSTORE\nPUSH8 9\nEMIT 0\nREVERT";
        let program = assemble(src).unwrap();
        let input = call_input("f", &[]).unwrap();
        let keys = keys();
        let ctx = ExecContext::dry_run(PUNTER, CONTRACT, &input, &keys);
        let mut s = BTreeMap::new();
        let out = execute(&program, &ctx, &mut s);
        assert_eq!(out.status, ReceiptStatus::FailedExec);
        assert!(out.events.is_empty());
        assert!(s.is_empty());
    }

    #[test]
    fn arguments_are_pushed_in_order() {
        let src = ".entry f\nSUB\nSTOP";
        let program = assemble(src).unwrap();
        let input = call_input("f", &[abi::u64_word(10), abi::u64_word(3)]).unwrap();
        let keys = keys();
        let ctx = ExecContext::dry_run(PUNTER, CONTRACT, &input, &keys);
        let out = execute(&program, &ctx, &mut BTreeMap::new());
        assert_eq!(out.output, abi::u64_word(7).to_vec());

        for bad in [vec![1, 2], { let mut v = call_input("f", &[]).unwrap(); v.push(0); v }] {
            let ctx = ExecContext::dry_run(PUNTER, CONTRACT, &bad, &keys);
            assert_eq!(execute(&program, &ctx, &mut BTreeMap::new()).status, ReceiptStatus::FailedExec);
        }
        let unknown = call_input("nope", &[]).unwrap();
        let ctx = ExecContext::dry_run(PUNTER, CONTRACT, &unknown, &keys);
        assert_eq!(execute(&program, &ctx, &mut BTreeMap::new()).fault, Some(ExecFault::UnknownSelector));
    }

    #[test]
    fn attached_calls_use_initiator_nonces() {
        let key = oracle_key();
        let src = ".entry betEXCALL\nEXCALL \"http://oracle.test/excallrand?nonce={nonce}\"\nSTOP";
        let program = assemble(src).unwrap();
        let nonce = derive_attached_nonce(&PUNTER, 4, 0);
        let tuple = VerifiableExternalCall {
            request_uri: substitute_nonce("http://oracle.test/excallrand?nonce={nonce}", &nonce),
            request_nonce: nonce,
            public_key: key.public_key(),
            response: b"1".to_vec(),
            signature: sign_response(&key, b"1", &nonce),
        };
        let rec = vec![CallRecord::Verified(tuple)];
        let input = call_input("betEXCALL", &[]).unwrap();
        let keys = keys();
        let src = NonceSource::Attached { sender: PUNTER, account_nonce: 4 };
        let ctx = ExecContext::finalize_attached(PUNTER, CONTRACT, &input, &keys, &rec, src);
        assert_eq!(ctx.mode(), ExecMode::Finalize);
        assert!(!ctx.has_network());
        assert_eq!(execute(&program, &ctx, &mut BTreeMap::new()).output, abi::u64_word(b'1' as u64).to_vec());
        let wrong = NonceSource::Attached { sender: PUNTER, account_nonce: 5 };
        let ctx = ExecContext::verify(PUNTER, CONTRACT, &input, &keys, &rec, wrong);
        assert_eq!(execute(&program, &ctx, &mut BTreeMap::new()).status, ReceiptStatus::FailedExcallUnverified);
    }
}
