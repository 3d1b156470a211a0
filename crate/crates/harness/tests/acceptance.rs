//! Runs every acceptance criterion and prints one line per criterion.

mod common;

use std::time::{Duration, Instant};

use common::*;
use excall_core::chain::{read_log, BlockLog, Chain, RejectReason};
use excall_core::crypto::{keygen, sign_response, verify_response};
use excall_core::types::{Address, Block, CallRecord, ExtensionEntry, VerifiableExternalCall};
use excall_core::vm::abi::bool_word;
use excall_harness::report::summary_text;
use excall_harness::{run_experiment, summarize, ExperimentConfig, ExperimentReport, Impl};
use excall_oracle::OracleService;
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};

const PERIOD_MS: u64 = 500;
const SPAN_RUNTIME_LIMIT: Duration = Duration::from_secs(120);
const RATIO_LIMIT: f64 = 0.85;
const RATIO_RUNTIME_LIMIT: Duration = Duration::from_secs(15 * 60);
const CRYPTO_CASES: u32 = 1000;
const LOG_BLOCKS: u64 = 200;
const DRAWS: usize = 10_000;
/// Three standard deviations of a fair binomial over `DRAWS`.
const DRAW_TOLERANCE: usize = 150;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn experiment(imp: Impl, initiators: usize, iterations: u64) -> ExperimentReport {
    let config = ExperimentConfig {
        implementation: imp,
        initiators,
        iterations,
        block_period_ms: PERIOD_MS,
        repeats: 1,
        verifiers: 2,
        ..Default::default()
    };
    run_experiment(&config).expect("experiment runs")
}

fn single_block_resolution(all: &mut Vec<ExperimentReport>) -> Outcome {
    let t = Instant::now();
    let ex = experiment(Impl::Excall, 4, 100);
    let st = experiment(Impl::Standard, 4, 100);
    let elapsed = t.elapsed();
    let (e, s) = (&ex.runs[0], &st.runs[0]);
    let ex_ok = e.complete && e.resolved == e.bets - e.failed_txs && e.spans.keys().all(|&k| k == 1);
    let st_ok = s.complete && s.resolved == s.bets && s.spans.keys().all(|&k| k >= 2);
    let detail = format!(
        "excall spans {:?} ({} of {} resolved), standard spans {:?} ({} of {}), {:.1}s",
        e.spans,
        e.resolved,
        e.bets,
        s.spans,
        s.resolved,
        s.bets,
        elapsed.as_secs_f64()
    );
    all.extend([ex, st]);
    outcome(ex_ok && st_ok && elapsed < SPAN_RUNTIME_LIMIT, detail)
}

fn throughput_ratio(all: &mut Vec<ExperimentReport>) -> Outcome {
    let t = Instant::now();
    let mut reports = Vec::new();
    for initiators in 1..=4 {
        reports.push(experiment(Impl::Excall, initiators, 1000));
        reports.push(experiment(Impl::Standard, initiators, 1000));
    }
    let elapsed = t.elapsed();
    print!("{}", summary_text(&reports));
    let (_, ratios) = summarize(&reports);
    let complete = reports.iter().all(ExperimentReport::complete);
    let below = ratios.len() == 4 && ratios.iter().all(|r| r.ratio < RATIO_LIMIT);
    let worst = ratios.iter().map(|r| r.ratio).fold(0.0, f64::max);
    all.extend(reports);
    outcome(
        complete && below && elapsed < RATIO_RUNTIME_LIMIT,
        format!("worst ratio {worst:.3} (limit {RATIO_LIMIT}), {:.0}s", elapsed.as_secs_f64()),
    )
}

fn verifier_silence(all: &[ExperimentReport]) -> Outcome {
    let calls: u64 = all.iter().flat_map(|r| &r.runs).map(|r| r.verifier_calls).sum();
    let excall_bets: u64 = all
        .iter()
        .filter(|r| r.config.implementation == Impl::Excall)
        .flat_map(|r| &r.runs)
        .map(|r| r.resolved)
        .sum();
    let agree = all.iter().flat_map(|r| &r.runs).all(|r| r.replicas_agree);
    outcome(
        calls == 0 && excall_bets > 0 && agree,
        format!("{calls} verifier calls over {} runs, {excall_bets} EXCALL bets accepted", all.len()),
    )
}

fn tamper_suite() -> Outcome {
    let (mut chain, _, contract) = deployed();
    let port = FixedOracle::by_nonce();
    let earlier = commit(&mut chain, vec![bet_excall(contract, Address([0x51; 20]), 0)], &port).block;
    let block = produce(&chain, vec![bet_excall(contract, Address([0x52; 20]), 0)], &port).block;
    assert!(chain.verify_block(&block).is_ok());

    fn tuple(b: &mut Block) -> &mut VerifiableExternalCall {
        match &mut b.excall_extension[0].record {
            CallRecord::Verified(t) => t,
            r => panic!("unexpected record {r:?}"),
        }
    }
    let rogue = keygen(&[0xEE; 32]).unwrap();
    type Case<'a> = (&'static str, Box<dyn Fn(&mut Block) + 'a>, fn(&RejectReason) -> bool);
    let cases: Vec<Case> = vec![
        ("flipped response", Box::new(|b| tuple(b).response[0] ^= 0x01), |r| {
            matches!(r, RejectReason::InvalidSignature { .. })
        }),
        (
            "transplanted tuple",
            Box::new(|b| *tuple(b) = earlier.excall_extension[0].record.tuple().unwrap().clone()),
            |r| matches!(r, RejectReason::NonceMismatch { .. }),
        ),
        (
            "unpinned key",
            Box::new(|b| {
                let t = tuple(b);
                t.public_key = rogue.public_key();
                t.signature = sign_response(&rogue, &t.response, &t.request_nonce);
            }),
            |r| matches!(r, RejectReason::UnknownOraclePublicKey { .. }),
        ),
        ("missing entry", Box::new(|b| b.excall_extension.clear()), |r| {
            matches!(r, RejectReason::MissingExtensionEntry { .. })
        }),
        (
            "extra entry",
            Box::new(|b| b.excall_extension.push(ExtensionEntry { tx_index: 0, call_index: 1, record: CallRecord::NoResponse })),
            |r| matches!(r, RejectReason::ExtraExtensionEntry { .. }),
        ),
    ];
    let mut rejected = 0;
    let mut seen = Vec::new();
    for (name, edit, expected) in &cases {
        let mut b = block.clone();
        edit(&mut b);
        let b = reseal(b);
        match chain.verify_block(&b) {
            Err(r) if expected(&r) => rejected += 1,
            other => seen.push(format!("{name}: {:?}", other.err())),
        }
    }
    outcome(rejected == cases.len(), format!("{rejected}/{} rejected with the expected reason {seen:?}", cases.len()))
}

fn replay_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("blocks.log");
    let mut sealer = Chain::with_log(config(), BlockLog::create(&path).unwrap()).unwrap();
    let (_, contract) = deploy_into(&mut sealer);
    let mut twins = [Chain::new(config()).unwrap(), Chain::new(config()).unwrap()];
    for t in &mut twins {
        t.apply_block(sealer.block(1).unwrap().clone()).unwrap();
    }
    let port = FixedOracle::by_nonce();
    let mut agree_every_height = true;
    for n in 1..LOG_BLOCKS {
        let txs = (0..3u8).map(|p| bet_excall(contract, Address([0x60 + p; 20]), n - 1)).collect();
        let b = commit(&mut sealer, txs, &port).block;
        for t in &mut twins {
            t.apply_block(b.clone()).unwrap();
        }
        let root = sealer.head().header.state_root;
        agree_every_height &= twins.iter().all(|t| t.head().header.state_root == root);
    }
    let logged = read_log(&path).unwrap().len() as u64;
    let replayed = Chain::open(config(), &path).unwrap();
    let same = replayed.head().header.state_root == sealer.head().header.state_root
        && replayed.head().digest() == sealer.head().digest();
    outcome(
        logged == LOG_BLOCKS && same && agree_every_height,
        format!("{logged} logged blocks, replayed root equal: {same}, twins agree at every height: {agree_every_height}"),
    )
}

fn crypto_conformance() -> Outcome {
    let mut runner = TestRunner::new(ProptestConfig { cases: CRYPTO_CASES, failure_persistence: None, ..Default::default() });
    let strategy = (any::<[u8; 32]>(), proptest::collection::vec(any::<u8>(), 0..512), any::<[u8; 32]>(), any::<usize>(), 1u8..=255);
    let result = runner.run(&strategy, |(seed, resp, nonce, pos, mask)| {
        let key = keygen(&seed).unwrap();
        let pk = key.public_key();
        let sig = sign_response(&key, &resp, &nonce);
        prop_assert!(verify_response(&pk, &resp, &nonce, &sig));

        let mut s = sig.clone();
        let i = pos % s.len();
        s[i] ^= mask;
        prop_assert!(!verify_response(&pk, &resp, &nonce, &s));

        let mut r = resp.clone();
        if r.is_empty() {
            r.push(mask);
        } else {
            let i = pos % r.len();
            r[i] ^= mask;
        }
        prop_assert!(!verify_response(&pk, &r, &nonce, &sig));

        let mut n = nonce;
        n[pos % 32] ^= mask;
        prop_assert!(!verify_response(&pk, &resp, &n, &sig));

        let mut other_seed = seed;
        other_seed[pos % 32] ^= mask;
        let other = keygen(&other_seed).unwrap().public_key();
        prop_assert!(!verify_response(&other, &resp, &nonce, &sig));
        Ok(())
    });
    match result {
        Ok(()) => outcome(true, format!("{CRYPTO_CASES} cases, 0 failures")),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn standard_semantics() -> Outcome {
    let c = standard_checks();
    let settled = c.first_output == bool_word(true).to_vec() && c.winnings_after_win == 1;
    let idempotent = c.duplicate_output == bool_word(false).to_vec() && c.winnings_after_duplicate == 1;
    outcome(
        c.guard_reverted && settled && idempotent,
        format!("guard {}, increment {settled}, idempotent {idempotent}", c.guard_reverted),
    )
}

fn oracle_statistics() -> Outcome {
    let draws = || {
        let s = OracleService::new(keygen(&[5; 32]).unwrap(), 0.5, 0xE1).unwrap();
        (0..DRAWS).map(|_| s.draw()).collect::<Vec<bool>>()
    };
    let a = draws();
    let b = draws();
    let wins = a.iter().filter(|&&w| w).count();
    let within = wins.abs_diff(DRAWS / 2) <= DRAW_TOLERANCE;
    outcome(within && a == b, format!("{wins} wins of {DRAWS} (5000 ± {DRAW_TOLERANCE}), repeatable: {}", a == b))
}

fn main() {
    let mut reports = Vec::new();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |n, name, o: Outcome| {
        println!("criterion {n} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    record(4, "tamper suite", tamper_suite());
    record(5, "replay determinism", replay_determinism());
    record(6, "crypto conformance", crypto_conformance());
    record(7, "standard-contract semantics", standard_semantics());
    record(8, "oracle statistics", oracle_statistics());
    record(1, "single-block resolution", single_block_resolution(&mut reports));
    record(2, "throughput ratio", throughput_ratio(&mut reports));
    record(3, "verifier silence", verifier_silence(&reports));

    let failed: Vec<u32> = results.iter().filter(|(_, _, o)| !o.pass).map(|(n, _, _)| *n).collect();
    println!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
