use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use excall_core::chain::{genesis_block, read_log, BlockLog, Chain, ChainConfig, ChainError, LogError, SubmitError, TxSubmit};
use excall_core::crypto::Digest;
use excall_core::types::{Block, Transaction};
use thiserror::Error;

use crate::bus::{Bus, Delivery, Latency};
use crate::clock::{Clock, ClockMode};
use crate::node::{NodeHandle, NodeRole, Role};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("genesis {got} does not match the network genesis {expected}")]
    GenesisMismatch { expected: Digest, got: Digest },
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Log(#[from] LogError),
}

struct Shared {
    clock: Clock,
    genesis: Digest,
    genesis_ts: u64,
    bus: Mutex<Bus>,
    nodes: RwLock<Vec<NodeHandle>>,
    sealing: AtomicBool,
    /// Steps holding taken messages or a seal slot.
    busy: AtomicUsize,
    stop: Arc<AtomicBool>,
    threads: Mutex<Vec<JoinHandle<()>>>,
    live: AtomicBool,
}

/// The network: a clock, a bus and the nodes attached to it.
#[derive(Clone)]
pub struct SimNetwork {
    shared: Arc<Shared>,
}

impl SimNetwork {
    /// `config` fixes the genesis every node must share.
    pub fn new(config: &ChainConfig, latency: Latency, mode: ClockMode) -> Self {
        let shared = Shared {
            clock: Clock::new(mode),
            genesis: genesis_block(config).digest(),
            genesis_ts: config.genesis_timestamp,
            bus: Mutex::new(Bus::new(latency)),
            nodes: RwLock::new(Vec::new()),
            sealing: AtomicBool::new(true),
            busy: AtomicUsize::new(0),
            stop: Arc::new(AtomicBool::new(false)),
            threads: Mutex::new(Vec::new()),
            live: AtomicBool::new(false),
        };
        SimNetwork { shared: Arc::new(shared) }
    }

    pub fn mode(&self) -> ClockMode {
        self.shared.clock.mode()
    }

    /// Milliseconds since the network started.
    pub fn now_ms(&self) -> u64 {
        self.shared.clock.now_ms()
    }

    fn check_genesis(&self, config: &ChainConfig) -> Result<(), NetError> {
        let got = genesis_block(config).digest();
        if got != self.shared.genesis {
            return Err(NetError::GenesisMismatch { expected: self.shared.genesis, got });
        }
        Ok(())
    }

    fn register(&self, role: NodeRole, chain: Chain) -> NodeHandle {
        let mut nodes = self.shared.nodes.write().expect("node list poisoned");
        let node = NodeHandle::new(nodes.len(), role, chain);
        nodes.push(node.clone());
        node
    }

    pub fn spawn_node(&self, role: NodeRole, config: ChainConfig) -> Result<NodeHandle, NetError> {
        self.check_genesis(&config)?;
        let node = self.register(role, Chain::new(config)?);
        self.start_thread(&node);
        Ok(node)
    }

    /// Like [`spawn_node`](Self::spawn_node), also writing every committed
    /// block to a fresh log at `path`.
    pub fn spawn_logged(&self, role: NodeRole, config: ChainConfig, path: &Path) -> Result<NodeHandle, NetError> {
        self.check_genesis(&config)?;
        let log = BlockLog::create(path).map_err(LogError::Io)?;
        let node = self.register(role, Chain::with_log(config, log)?);
        self.start_thread(&node);
        Ok(node)
    }

    /// Joins a running network by verifying and applying `donor_log`, then
    /// following broadcasts. The node subscribes before reading the log so no
    /// block falls in between.
    pub fn join_from_log(&self, role: NodeRole, config: ChainConfig, donor_log: &Path) -> Result<NodeHandle, NetError> {
        self.check_genesis(&config)?;
        let node = self.register(role, Chain::new(config)?);
        let blocks = read_log(donor_log)?;
        if let Some(first) = blocks.first() {
            let got = first.header.parent_digest;
            let ours = node.with_chain(|c| c.genesis().digest());
            if got != ours {
                return Err(NetError::GenesisMismatch { expected: ours, got });
            }
        }
        node.catch_up(blocks)?;
        self.start_thread(&node);
        Ok(node)
    }

    pub fn nodes(&self) -> Vec<NodeHandle> {
        self.shared.nodes.read().expect("node list poisoned").clone()
    }

    pub fn verifiers(&self) -> Vec<NodeHandle> {
        self.nodes().into_iter().filter(|n| n.role() == Role::Verifier).collect()
    }

    pub fn sealers(&self) -> Vec<NodeHandle> {
        self.nodes().into_iter().filter(|n| n.role() == Role::Sealer).collect()
    }

    pub fn gateway(&self) -> Gateway {
        Gateway { net: self.clone() }
    }

    pub fn deliveries(&self) -> Vec<Delivery> {
        self.shared.bus.lock().expect("bus poisoned").log().to_vec()
    }

    pub fn in_flight(&self) -> usize {
        self.shared.bus.lock().expect("bus poisoned").in_flight()
    }

    pub fn set_sealing(&self, on: bool) {
        self.shared.sealing.store(on, Ordering::SeqCst);
    }

    /// Same head block and state root everywhere.
    pub fn replicas_agree(&self) -> bool {
        let nodes = self.nodes();
        let Some(first) = nodes.first() else { return true };
        let (d, r) = (first.head_digest(), first.state_root());
        nodes.iter().all(|n| n.head_digest() == d && n.state_root() == r)
    }

    /// Nothing in flight and no node mid-step.
    fn settled(&self) -> bool {
        let bus = self.shared.bus.lock().expect("bus poisoned");
        bus.in_flight() == 0 && self.shared.busy.load(Ordering::SeqCst) == 0
    }

    /// Pauses sealing and waits until every sent block is applied.
    pub fn quiesce(&self, timeout: Duration) -> bool {
        self.set_sealing(false);
        self.run_until(|| self.settled(), timeout)
    }

    fn step_node(shared: &Shared, node: &NodeHandle) -> bool {
        let rel = shared.clock.now_ms();
        let incoming = {
            let mut bus = shared.bus.lock().expect("bus poisoned");
            let due = bus.take_due(node.id(), rel);
            if !due.is_empty() {
                shared.busy.fetch_add(1, Ordering::SeqCst);
            }
            due
        };
        let received = !incoming.is_empty();
        let may_seal = node.role() == Role::Sealer && {
            shared.busy.fetch_add(1, Ordering::SeqCst);
            let on = shared.sealing.load(Ordering::SeqCst);
            if !on {
                shared.busy.fetch_sub(1, Ordering::SeqCst);
            }
            on
        };
        let sealed = node.process(incoming, shared.genesis_ts + rel, may_seal);
        if let Some(b) = &sealed {
            Self::broadcast(shared, node.id(), b, rel);
        }
        let held = usize::from(received) + usize::from(may_seal);
        shared.busy.fetch_sub(held, Ordering::SeqCst);
        received || sealed.is_some()
    }

    fn broadcast(shared: &Shared, from: usize, block: &Arc<Block>, rel: u64) {
        let nodes = shared.nodes.read().expect("node list poisoned");
        let mut bus = shared.bus.lock().expect("bus poisoned");
        for n in nodes.iter().filter(|n| n.id() != from) {
            bus.send(from, n.id(), block.clone(), rel);
        }
    }

    /// Processes every node once at the current time, in id order.
    pub fn tick(&self) -> bool {
        let mut progressed = false;
        for n in self.nodes() {
            progressed |= Self::step_node(&self.shared, &n);
        }
        progressed
    }

    fn next_event(&self) -> Option<u64> {
        let bus = self.shared.bus.lock().expect("bus poisoned").next_due();
        let seal = if self.shared.sealing.load(Ordering::SeqCst) {
            self.sealers().iter().filter_map(|n| n.next_seal_at()).min().map(|t| t.saturating_sub(self.shared.genesis_ts))
        } else {
            None
        };
        [bus, seal].into_iter().flatten().min()
    }

    /// Virtual time: jumps to the next event not after `deadline` and runs it.
    fn step_virtual(&self, deadline: u64) -> bool {
        let now = self.now_ms();
        match self.next_event() {
            Some(t) if t <= deadline => {
                self.shared.clock.advance_to(t);
                self.tick() || t > now
            }
            _ => false,
        }
    }

    /// Lets `ms` of network time pass.
    pub fn run_for(&self, ms: u64) {
        match self.mode() {
            ClockMode::Virtual => {
                let end = self.now_ms() + ms;
                while self.step_virtual(end) {}
                self.shared.clock.advance_to(end);
                self.tick();
            }
            ClockMode::Real => std::thread::sleep(Duration::from_millis(ms)),
        }
    }

    /// Runs until `done` holds or `timeout` of network time passes.
    pub fn run_until(&self, done: impl Fn() -> bool, timeout: Duration) -> bool {
        match self.mode() {
            ClockMode::Virtual => {
                let end = self.now_ms() + timeout.as_millis() as u64;
                loop {
                    if done() {
                        return true;
                    }
                    if !self.step_virtual(end) {
                        self.shared.clock.advance_to(end);
                        self.tick();
                        return done();
                    }
                }
            }
            ClockMode::Real => {
                let end = Instant::now() + timeout;
                while Instant::now() < end {
                    if done() {
                        return true;
                    }
                    std::thread::sleep(Duration::from_millis(2));
                }
                done()
            }
        }
    }

    /// Real time only: gives every node, present and future, its own loop.
    pub fn start(&self) -> Running {
        assert_eq!(self.mode(), ClockMode::Real, "virtual networks are driven by run_for");
        self.shared.live.store(true, Ordering::SeqCst);
        for n in self.nodes() {
            self.start_thread(&n);
        }
        Running { net: self.clone() }
    }

    fn start_thread(&self, node: &NodeHandle) {
        if !self.shared.live.load(Ordering::SeqCst) {
            return;
        }
        let shared = self.shared.clone();
        let node = node.clone();
        let handle = std::thread::Builder::new()
            .name(format!("node-{}", node.id()))
            .spawn(move || {
                while !shared.stop.load(Ordering::SeqCst) {
                    if !Self::step_node(&shared, &node) {
                        std::thread::sleep(Duration::from_millis(1));
                    }
                }
            })
            .expect("spawn node thread");
        self.shared.threads.lock().expect("threads poisoned").push(handle);
    }
}

/// Stops the node threads when dropped.
pub struct Running {
    net: SimNetwork,
}

impl Running {
    pub fn stop(self) {}
}

impl Drop for Running {
    fn drop(&mut self) {
        let s = &self.net.shared;
        s.stop.store(true, Ordering::SeqCst);
        s.live.store(false, Ordering::SeqCst);
        for t in s.threads.lock().expect("threads poisoned").drain(..) {
            let _ = t.join();
        }
    }
}

/// Fans each transaction out to every node's mempool.
#[derive(Clone)]
pub struct Gateway {
    net: SimNetwork,
}

impl TxSubmit for Gateway {
    fn submit_tx(&self, tx: Transaction) -> Result<Digest, SubmitError> {
        let nodes = self.net.nodes();
        // Sealers decide; verifier mempools only mirror.
        let decider = nodes.iter().position(|n| n.role() == Role::Sealer).unwrap_or(0);
        let mut verdict = Err(SubmitError::Unavailable);
        for (i, n) in nodes.iter().enumerate() {
            let r = n.submit(tx.clone());
            if i == decider {
                verdict = r;
            }
        }
        verdict
    }
}
