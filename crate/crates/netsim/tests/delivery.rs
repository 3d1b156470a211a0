mod common;

use std::time::Duration;

use common::*;
use excall_core::chain::ChainQuery;
use excall_netsim::{ClockMode, Latency};

#[test]
fn zero_latency_applies_in_same_tick() {
    let (net, sealer, vs) = network(500, Latency::Constant(0), ClockMode::Virtual, 1);
    net.run_until(|| sealer.height() >= 1, Duration::from_secs(2));
    let t = net.now_ms();
    assert_eq!(vs[0].height(), 1);
    assert_eq!(net.now_ms(), t);
    assert!(net.deliveries().iter().all(|d| d.delivered_at == d.sent_at));
}

fn fifty_ms(mode: ClockMode) {
    let (net, sealer, vs) = network(60, Latency::Constant(50), mode, 2);
    let _run = (mode == ClockMode::Real).then(|| net.start());
    assert!(wait_height(&net, &sealer, 5, Duration::from_secs(10)));
    assert!(net.quiesce(Duration::from_secs(5)));
    let d = net.deliveries();
    assert_eq!(d.len() as u64, 2 * sealer.height());
    assert!(d.iter().all(|d| d.delivered_at >= d.sent_at + 50), "{d:?}");
    assert!(vs.iter().all(|v| v.height() == sealer.height()));
}

#[test]
fn fifty_ms_latency_virtual() {
    fifty_ms(ClockMode::Virtual);
}

#[test]
fn fifty_ms_latency_real() {
    fifty_ms(ClockMode::Real);
}

#[test]
fn latency_delays_application() {
    let (net, sealer, vs) = network(500, Latency::Constant(50), ClockMode::Virtual, 1);
    net.run_for(500);
    assert_eq!(sealer.height(), 1);
    assert_eq!(vs[0].height(), 0);
    net.run_for(49);
    assert_eq!(vs[0].height(), 0);
    net.run_for(1);
    assert_eq!(vs[0].height(), 1);
}

#[test]
fn thousand_blocks_applied_in_order() {
    let (net, sealer, vs) = network(10, Latency::Jitter { base_ms: 1, spread_ms: 40, seed: 77 }, ClockMode::Virtual, 1);
    assert!(wait_height(&net, &sealer, 1000, Duration::from_secs(60)));
    net.set_sealing(false);
    assert!(net.quiesce(Duration::from_secs(5)));
    let applied = vs[0].applied();
    assert_eq!(applied.len() as u64, sealer.height());
    assert!(applied.iter().zip(1..).all(|(a, b)| *a == b));
    let d = net.deliveries();
    assert!(d.len() >= 1000);
    assert!(d.windows(2).all(|w| w[0].seq < w[1].seq && w[0].block_number < w[1].block_number));
    assert!(net.replicas_agree());
}
