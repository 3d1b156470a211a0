use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};

use excall_core::chain::{Chain, ChainError, ChainQuery, CountingPort, EventRecord, Mempool, ReceiptRecord, RejectReason, SubmitError};
use excall_core::crypto::{Digest, KeyPair};
use excall_core::types::{Address, Block, BlockHeader, Nonce, Transaction, VerifiableExternalCall};
use excall_core::vm::abi::Word;
use excall_core::vm::{ExcallPort, PortError};
use log::{debug, warn};

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Sealer,
    Verifier,
}

pub enum NodeRole {
    Sealer { key: Box<KeyPair>, port: Arc<dyn ExcallPort> },
    Verifier,
}

impl NodeRole {
    pub fn sealer(key: KeyPair, port: Arc<dyn ExcallPort>) -> Self {
        NodeRole::Sealer { key: Box::new(key), port }
    }

    fn role(&self) -> Role {
        match self {
            NodeRole::Sealer { .. } => Role::Sealer,
            NodeRole::Verifier => Role::Verifier,
        }
    }
}

/// Stands in for the network on nodes that must never reach it.
struct Offline;

impl ExcallPort for Offline {
    fn call(&self, uri: &str, _: &Nonce) -> Result<VerifiableExternalCall, PortError> {
        Err(PortError::NoResponse(format!("node has no network access: {uri}")))
    }
}

pub(crate) struct NodeState {
    pub(crate) chain: Chain,
    pub(crate) mempool: Mempool,
    early: BTreeMap<u64, Arc<Block>>,
    applied: Vec<u64>,
    rejections: Vec<(u64, RejectReason)>,
}

pub(crate) struct Node {
    id: NodeId,
    role: Role,
    key: Option<KeyPair>,
    port: CountingPort<Arc<dyn ExcallPort>>,
    state: Mutex<NodeState>,
}

/// Shared handle to one node. Queries lock the node briefly.
#[derive(Clone)]
pub struct NodeHandle(pub(crate) Arc<Node>);

impl NodeHandle {
    pub(crate) fn new(id: NodeId, role: NodeRole, chain: Chain) -> Self {
        let config = chain.config();
        let mempool = Mempool::new(config.oracle_keys.clone(), config.max_excalls_per_tx);
        let r = role.role();
        let (key, port): (_, Arc<dyn ExcallPort>) = match role {
            NodeRole::Sealer { key, port } => (Some(*key), port),
            NodeRole::Verifier => (None, Arc::new(Offline)),
        };
        let state = NodeState { chain, mempool, early: BTreeMap::new(), applied: Vec::new(), rejections: Vec::new() };
        NodeHandle(Arc::new(Node { id, role: r, key, port: CountingPort::new(port), state: Mutex::new(state) }))
    }

    pub fn id(&self) -> NodeId {
        self.0.id
    }

    pub fn role(&self) -> Role {
        self.0.role
    }

    /// External calls this node has issued.
    pub fn external_calls(&self) -> u64 {
        self.0.port.calls()
    }

    pub(crate) fn lock(&self) -> MutexGuard<'_, NodeState> {
        self.0.state.lock().expect("node state poisoned")
    }

    /// Runs `f` against the node's chain.
    pub fn with_chain<R>(&self, f: impl FnOnce(&Chain) -> R) -> R {
        f(&self.lock().chain)
    }

    pub fn state_root(&self) -> Digest {
        self.lock().chain.head().header.state_root
    }

    pub fn head_digest(&self) -> Digest {
        self.lock().chain.head().digest()
    }

    /// Block numbers applied from the network, in application order.
    pub fn applied(&self) -> Vec<u64> {
        self.lock().applied.clone()
    }

    pub fn rejections(&self) -> Vec<(u64, RejectReason)> {
        self.lock().rejections.clone()
    }

    pub fn mempool_len(&self) -> usize {
        self.lock().mempool.len()
    }

    pub(crate) fn submit(&self, tx: Transaction) -> Result<Digest, SubmitError> {
        self.lock().mempool.submit(tx)
    }

    /// Chain timestamp at which this node would seal the next block, if it
    /// is the sealer in turn.
    pub(crate) fn next_seal_at(&self) -> Option<u64> {
        let key = self.0.key.as_ref()?;
        let st = self.lock();
        let head = &st.chain.head().header;
        (st.chain.config().sealer_for(head.number + 1) == key.public_key()).then(|| head.timestamp + st.chain.config().block_period_ms)
    }

    /// Applies `incoming`, then seals if due at chain time `now`. Returns a
    /// block to broadcast.
    pub(crate) fn process(&self, incoming: Vec<Arc<Block>>, now: u64, may_seal: bool) -> Option<Arc<Block>> {
        let mut st = self.lock();
        for b in incoming {
            receive(&mut st, b);
        }
        let key = self.0.key.as_ref().filter(|_| may_seal)?;
        let (number, due) = {
            let head = &st.chain.head().header;
            (head.number + 1, head.timestamp + st.chain.config().block_period_ms)
        };
        if now < due || st.chain.config().sealer_for(number) != key.public_key() {
            return None;
        }
        match seal_next(&mut st, key, &self.0.port, now) {
            Ok(b) => Some(b),
            Err(e) => {
                warn!("node {} failed to seal block {number}: {e}", self.0.id);
                None
            }
        }
    }

    /// Replays blocks from another node's log; genesis is not logged.
    pub(crate) fn catch_up(&self, blocks: Vec<Block>) -> Result<(), ChainError> {
        let mut guard = self.lock();
        let st = &mut *guard;
        for b in blocks {
            if b.header.number <= st.chain.height() {
                continue;
            }
            st.mempool.on_block(&b);
            st.chain.apply_block(b)?;
        }
        while let Some(next) = st.early.remove(&(st.chain.height() + 1)) {
            apply(st, &next);
        }
        Ok(())
    }
}

fn seal_next(st: &mut NodeState, key: &KeyPair, port: &dyn ExcallPort, now: u64) -> Result<Arc<Block>, ChainError> {
    let max = st.chain.config().max_txs_per_block;
    let txs = st.mempool.select(max);
    let sealer = Address::from_public_key(&key.public_key());
    let unsealed = st.chain.build_block(txs, now, sealer)?;
    let finalized = st.chain.finalize_excalls(unsealed, port)?;
    let sealed = st.chain.seal(finalized, key)?;
    let block = Arc::new(sealed.block.clone());
    st.chain.commit_own(sealed)?;
    st.mempool.on_block(&block);
    debug!("sealed block {} with {} txs", block.header.number, block.transactions.len());
    Ok(block)
}

fn receive(st: &mut NodeState, block: Arc<Block>) {
    let n = block.header.number;
    let height = st.chain.height();
    if n <= height {
        if st.chain.block(n).map(Block::digest) != Some(block.digest()) {
            st.rejections.push((n, RejectReason::ParentMismatch));
        }
        return;
    }
    if n > height + 1 {
        st.early.insert(n, block);
        return;
    }
    apply(st, &block);
    while let Some(next) = st.early.remove(&(st.chain.height() + 1)) {
        apply(st, &next);
    }
}

fn apply(st: &mut NodeState, block: &Block) {
    let n = block.header.number;
    match st.chain.apply_block(block.clone()) {
        Ok(()) => {
            st.mempool.on_block(block);
            st.applied.push(n);
        }
        Err(ChainError::Rejected(r)) => {
            warn!("rejected block {n}: {r}");
            st.rejections.push((n, r));
        }
        Err(e) => warn!("could not apply block {n}: {e}"),
    }
}

impl ChainQuery for NodeHandle {
    fn head_header(&self) -> BlockHeader {
        self.lock().chain.head_header()
    }

    fn height(&self) -> u64 {
        self.lock().chain.height()
    }

    fn receipt(&self, tx: &Digest) -> Option<ReceiptRecord> {
        self.lock().chain.receipt(tx)
    }

    fn events_by_topic(&self, topic: &Word, from_block: u64) -> Vec<EventRecord> {
        self.lock().chain.events_by_topic(topic, from_block)
    }

    fn account_nonce(&self, account: &Address) -> u64 {
        self.lock().chain.account_nonce(account)
    }

    fn storage_at(&self, contract: &Address, key: &Word) -> Word {
        self.lock().chain.storage_at(contract, key)
    }
}
