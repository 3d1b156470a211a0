//! Timed betting runs.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use excall_core::chain::{Chain, ChainQuery, TxSubmit};
use excall_core::crypto::{hash_parts, PublicKey};
use excall_core::types::{Address, CallRecord, Transaction, TxTarget};
use excall_core::vm::abi::{call_input, data_words, event_topic, word_address, word_u64, Word};
use excall_netsim::Latency;
use excall_oracle::relayer::BET_PLACED;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::testbed::{OracleSetup, Testbed, TestbedOptions, RELAYER};
use crate::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Impl {
    Standard,
    Excall,
}

impl Impl {
    pub fn name(self) -> &'static str {
        match self {
            Impl::Standard => "standard",
            Impl::Excall => "excall",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteOracle {
    pub url: String,
    pub public_key: PublicKey,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    #[serde(rename = "impl")]
    pub implementation: Impl,
    pub initiators: usize,
    pub iterations: u64,
    pub block_period_ms: u64,
    pub repeats: usize,
    pub verifiers: usize,
    pub link_latency_ms: u64,
    pub win_probability: f64,
    pub oracle_seed: u64,
    pub oracle_latency_ms: u64,
    pub max_txs_per_block: usize,
    /// Unset: an in-process service is started for every repeat.
    pub oracle: Option<RemoteOracle>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            implementation: Impl::Excall,
            initiators: 1,
            iterations: 10,
            block_period_ms: 500,
            repeats: 4,
            verifiers: 1,
            link_latency_ms: 0,
            win_probability: 0.5,
            oracle_seed: 1,
            oracle_latency_ms: 0,
            max_txs_per_block: 200,
            oracle: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if !(1..=64).contains(&self.initiators) {
            return bad("initiators must be between 1 and 64");
        }
        if self.iterations == 0 || self.repeats == 0 {
            return bad("iterations and repeats must be positive");
        }
        if self.block_period_ms == 0 {
            return bad("block period must be positive");
        }
        Ok(())
    }

    /// Any bet still unresolved this long after submission marks the run incomplete.
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(100 * self.block_period_ms)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub wall_ms: u64,
    pub blocks: u64,
    pub failed_txs: u64,
    pub complete: bool,
    pub bets: u64,
    /// Bets whose outcome is recorded on chain.
    pub resolved: u64,
    /// Blocks from a bet's own block to the one that settled it, inclusive.
    pub spans: BTreeMap<u64, u64>,
    pub wins: u64,
    /// '1' answers served by the in-process oracle.
    pub oracle_ones: Option<u64>,
    pub verifier_calls: u64,
    pub replicas_agree: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub runs: Vec<RepeatResult>,
}

impl ExperimentReport {
    pub fn min_ms(&self) -> Option<u64> {
        self.runs.iter().map(|r| r.wall_ms).min()
    }

    pub fn max_ms(&self) -> Option<u64> {
        self.runs.iter().map(|r| r.wall_ms).max()
    }

    pub fn mean_ms(&self) -> Option<f64> {
        (!self.runs.is_empty()).then(|| self.runs.iter().map(|r| r.wall_ms as f64).sum::<f64>() / self.runs.len() as f64)
    }

    pub fn complete(&self) -> bool {
        self.runs.iter().all(|r| r.complete)
    }
}

pub fn initiator_address(i: usize) -> Address {
    Address::from_digest(&hash_parts(&[b"initiator", &(i as u64).to_be_bytes()]))
}

fn bet_tx(imp: Impl, target: Address, sender: Address, nonce: u64) -> Transaction {
    let function = match imp {
        Impl::Standard => "beginBetOracle",
        Impl::Excall => "betEXCALL",
    };
    Transaction::call(sender, nonce, target, call_input(function, &[]).expect("non-empty name"))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let mut runs = Vec::with_capacity(config.repeats);
    for repeat in 0..config.repeats {
        let r = run_repeat(config, repeat)?;
        info!(
            "{} initiators={} iterations={} repeat={} wall_ms={} blocks={} failed={}",
            config.implementation.name(),
            config.initiators,
            config.iterations,
            repeat,
            r.wall_ms,
            r.blocks,
            r.failed_txs
        );
        runs.push(r);
    }
    Ok(ExperimentReport { config: config.clone(), runs })
}

fn testbed_for(config: &ExperimentConfig, repeat: usize) -> Result<Testbed, HarnessError> {
    let oracle = match &config.oracle {
        Some(r) => OracleSetup::Remote { url: r.url.clone(), public_key: r.public_key },
        None => OracleSetup::Local {
            seed: config.oracle_seed.wrapping_add(repeat as u64),
            win_probability: config.win_probability,
            latency: Duration::from_millis(config.oracle_latency_ms),
        },
    };
    Testbed::start(TestbedOptions {
        block_period_ms: config.block_period_ms,
        verifiers: config.verifiers,
        link_latency: Latency::Constant(config.link_latency_ms),
        oracle,
        relayer: config.implementation == Impl::Standard,
        max_txs_per_block: config.max_txs_per_block,
    })
}

fn run_repeat(config: &ExperimentConfig, repeat: usize) -> Result<RepeatResult, HarnessError> {
    let mut bed = testbed_for(config, repeat)?;
    let imp = config.implementation;
    let target = match imp {
        Impl::Standard => bed.contracts.standard,
        Impl::Excall => bed.contracts.excall,
    };
    let ones_before = bed.service.as_ref().map(|s| s.stats().wins);

    // Start right after a block so every run sees the same phase.
    let h = bed.sealer.height();
    if !bed.net.run_until(|| bed.sealer.height() > h, Duration::from_millis(config.block_period_ms * 10)) {
        return Err(HarnessError::Timeout("a fresh block".into()));
    }
    let start_height = bed.sealer.height();
    let started = Instant::now();
    let deadline = started + config.timeout();
    let punters: Vec<Address> = (0..config.initiators).map(initiator_address).collect();

    let finished = std::thread::scope(|s| {
        let workers: Vec<_> = punters
            .iter()
            .map(|&punter| {
                let gw = bed.gateway();
                let node = bed.sealer.clone();
                let iterations = config.iterations;
                s.spawn(move || -> Result<bool, HarnessError> {
                    for n in 0..iterations {
                        gw.submit_tx(bet_tx(imp, target, punter, n))?;
                    }
                    Ok(wait_until(deadline, || node.account_nonce(&punter) >= iterations))
                })
            })
            .collect();
        let mut all = true;
        for w in workers {
            all &= w.join().expect("initiator thread panicked")?;
        }
        Ok::<_, HarnessError>(all)
    })?;
    let total = config.iterations * config.initiators as u64;
    let complete = finished
        && match imp {
            Impl::Excall => true,
            Impl::Standard => wait_until(deadline, || bed.sealer.account_nonce(&RELAYER) >= total),
        };
    let wall_ms = started.elapsed().as_millis() as u64;
    let end_height = bed.sealer.height();
    if !complete {
        warn!("{} run {repeat} incomplete after {wall_ms} ms", imp.name());
    }

    bed.stop_relayer();
    let settled = bed.quiesce();
    let replicas_agree = settled && bed.net.replicas_agree();
    let topic = event_topic(BET_PLACED);
    let (failed_txs, spans, resolved) =
        bed.sealer.with_chain(|c| tally(c, imp, target, &topic, start_height, end_height));
    let wins = punters.iter().map(|p| bed.sealer.winnings(&target, p)).sum();
    let oracle_ones = bed.service.as_ref().zip(ones_before).map(|(s, b)| s.stats().wins - b);
    let verifier_calls = bed.verifier_calls();
    bed.shutdown();
    Ok(RepeatResult {
        repeat,
        wall_ms,
        blocks: end_height - start_height,
        failed_txs,
        complete,
        bets: total,
        resolved,
        spans,
        wins,
        oracle_ones,
        verifier_calls,
        replicas_agree,
    })
}

fn wait_until(deadline: Instant, done: impl Fn() -> bool) -> bool {
    loop {
        if done() {
            return true;
        }
        if Instant::now() >= deadline {
            return false;
        }
        std::thread::sleep(Duration::from_millis(2));
    }
}

/// Failed receipts in `(from, to]`, the bet span histogram and the number of
/// settled bets.
fn tally(chain: &Chain, imp: Impl, target: Address, topic: &Word, from: u64, to: u64) -> (u64, BTreeMap<u64, u64>, u64) {
    let mut failed = 0;
    let mut spans = BTreeMap::new();
    let mut placed: HashMap<(Address, u64), u64> = HashMap::new();
    let mut settled: Vec<((Address, u64), u64)> = Vec::new();
    for n in from + 1..=to {
        let (Some(block), Some(receipts)) = (chain.block(n), chain.receipts(n)) else { break };
        for (i, (tx, r)) in block.transactions.iter().zip(receipts).enumerate() {
            if !r.status.is_success() {
                failed += 1;
                continue;
            }
            if tx.target != TxTarget::Contract(target) {
                continue;
            }
            match imp {
                Impl::Excall => {
                    let recorded = block
                        .excall_extension
                        .iter()
                        .any(|e| e.tx_index == i as u32 && matches!(e.record, CallRecord::Verified(_)));
                    if recorded {
                        *spans.entry(1).or_insert(0) += 1;
                    }
                }
                Impl::Standard => {
                    for e in r.events.iter().filter(|e| &e.topic == topic) {
                        let w = data_words(&e.data);
                        if let (Some(p), Some(rf)) = (w.first(), w.get(1).and_then(word_u64)) {
                            placed.insert((word_address(p), rf), n);
                        }
                    }
                    // A callback that settled a pending bet returns true.
                    if tx.sender == RELAYER && r.output.last() == Some(&1) {
                        let args = data_words(tx.input.get(4..).unwrap_or(&[]));
                        if let (Some(p), Some(rf)) = (args.first(), args.get(1).and_then(word_u64)) {
                            settled.push(((word_address(p), rf), n));
                        }
                    }
                }
            }
        }
    }
    for (key, at) in settled {
        if let Some(b) = placed.get(&key) {
            *spans.entry(at - b + 1).or_insert(0) += 1;
        }
    }
    let resolved = spans.values().sum();
    (failed, spans, resolved)
}
