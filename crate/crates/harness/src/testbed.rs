//! A running network with the oracle service, both contracts deployed and,
//! optionally, the callback relayer.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use excall_core::chain::{ChainConfig, ChainQuery, HttpPort};
use excall_core::crypto::{keygen_from_label, PublicKey};
use excall_core::types::{Address, OracleKeys};
use excall_netsim::{ClockMode, Gateway, Latency, NodeHandle, NodeRole, Running, SimNetwork};
use excall_oracle::{serve, OracleService, OutcomeSource, Relayer, ServerHandle};
use log::info;

use crate::samples::{deploy_samples, Deployed};
use crate::HarnessError;

pub const DEPLOYER: Address = Address([0xD0; 20]);
/// Sender of oracle callbacks; the standard contract is constructed with it.
pub const RELAYER: Address = Address([0x0A; 20]);

pub enum OracleSetup {
    /// Start a service in-process on an ephemeral port.
    Local { seed: u64, win_probability: f64, latency: Duration },
    /// Use a service that is already running.
    Remote { url: String, public_key: PublicKey },
}

pub struct TestbedOptions {
    pub block_period_ms: u64,
    pub verifiers: usize,
    pub link_latency: Latency,
    pub oracle: OracleSetup,
    pub relayer: bool,
    pub max_txs_per_block: usize,
}

impl Default for TestbedOptions {
    fn default() -> Self {
        TestbedOptions {
            block_period_ms: 500,
            verifiers: 1,
            link_latency: Latency::Constant(0),
            oracle: OracleSetup::Local { seed: 1, win_probability: 0.5, latency: Duration::ZERO },
            relayer: true,
            max_txs_per_block: 200,
        }
    }
}

struct RelayerTask {
    stop: Arc<AtomicBool>,
    thread: JoinHandle<u64>,
}

pub struct Testbed {
    pub net: SimNetwork,
    pub sealer: NodeHandle,
    pub verifiers: Vec<NodeHandle>,
    pub contracts: Deployed,
    pub oracle_url: String,
    pub oracle_key: PublicKey,
    /// Present when the service runs in-process.
    pub service: Option<Arc<OracleService>>,
    pub config: ChainConfig,
    server: Option<ServerHandle>,
    relayer: Option<RelayerTask>,
    running: Option<Running>,
}

impl Testbed {
    pub fn start(opts: TestbedOptions) -> Result<Self, HarnessError> {
        let (oracle_url, oracle_key, service, server) = match opts.oracle {
            OracleSetup::Local { seed, win_probability, latency } => {
                let svc = OracleService::new(keygen_from_label("harness-oracle"), win_probability, seed)?.with_latency(latency);
                let svc = Arc::new(svc);
                let server = serve("127.0.0.1:0", svc.clone())?;
                (server.url(), svc.public_key(), Some(svc), Some(server))
            }
            OracleSetup::Remote { url, public_key } => (url.trim_end_matches('/').to_string(), public_key, None, None),
        };

        let sealer_key = keygen_from_label("harness-sealer");
        let mut config = ChainConfig::new(
            vec![sealer_key.public_key()],
            OracleKeys::new().with(format!("{oracle_url}/"), oracle_key),
        );
        config.block_period_ms = opts.block_period_ms;
        config.max_txs_per_block = opts.max_txs_per_block;
        config.validate().map_err(HarnessError::Chain)?;
        let timeout = Duration::from_millis(config.excall_timeout_ms);

        let net = SimNetwork::new(&config, opts.link_latency, ClockMode::Real);
        let port = Arc::new(HttpPort::new(timeout));
        let sealer = net.spawn_node(NodeRole::sealer(sealer_key, port), config.clone())?;
        let verifiers = (0..opts.verifiers)
            .map(|_| net.spawn_node(NodeRole::Verifier, config.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let running = net.start();

        let contracts = deploy_samples(&net.gateway(), DEPLOYER, 0, RELAYER, &oracle_url)?;
        let deployed = || net.nodes().iter().all(|n| n.account_nonce(&DEPLOYER) == 2);
        if !net.run_until(deployed, Duration::from_millis(opts.block_period_ms * 20)) {
            return Err(HarnessError::Timeout("contract deployment".into()));
        }
        let ok = sealer.with_chain(|c| c.state().contract(&contracts.standard).is_some() && c.state().contract(&contracts.excall).is_some());
        if !ok {
            return Err(HarnessError::Config("deployment failed".into()));
        }
        info!("deployed standard at {} and excall at {}", contracts.standard, contracts.excall);

        let mut bed = Testbed {
            net,
            sealer,
            verifiers,
            contracts,
            oracle_url,
            oracle_key,
            service,
            config,
            server,
            relayer: None,
            running: Some(running),
        };
        if opts.relayer {
            bed.start_relayer(timeout)?;
        }
        Ok(bed)
    }

    fn start_relayer(&mut self, timeout: Duration) -> Result<(), HarnessError> {
        let source = OutcomeSource::remote(self.oracle_url.clone(), self.oracle_key, timeout);
        let mut relayer = Relayer::new(self.contracts.standard, RELAYER, source, None)?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let node = self.sealer.clone();
        let gateway = self.net.gateway();
        let thread = std::thread::Builder::new().name("relayer".into()).spawn(move || {
            relayer.run(&node, &gateway, Duration::from_millis(5), &flag);
            relayer.answered()
        })?;
        self.relayer = Some(RelayerTask { stop, thread });
        Ok(())
    }

    pub fn gateway(&self) -> Gateway {
        self.net.gateway()
    }

    /// External calls made by verifier nodes so far.
    pub fn verifier_calls(&self) -> u64 {
        self.verifiers.iter().map(NodeHandle::external_calls).sum()
    }

    /// Stops the relayer, returning how many callbacks it sent.
    pub fn stop_relayer(&mut self) -> Option<u64> {
        let task = self.relayer.take()?;
        task.stop.store(true, Ordering::SeqCst);
        task.thread.join().ok()
    }

    /// Stops sealing and waits for every node to apply every block.
    pub fn quiesce(&self) -> bool {
        self.net.quiesce(Duration::from_secs(30))
    }

    pub fn shutdown(mut self) {
        self.stop_relayer();
        drop(self.running.take());
        if let Some(s) = self.server.take() {
            s.shutdown();
        }
    }
}

impl Drop for Testbed {
    fn drop(&mut self) {
        self.stop_relayer();
        drop(self.running.take());
    }
}
