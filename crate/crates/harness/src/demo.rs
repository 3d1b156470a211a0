//! One bet through the whole pipeline, narrated step by step.

use std::io::Write;
use std::sync::Arc;
use std::time::Duration;

use excall_core::chain::{contract_address, Chain, ChainConfig, ChainQuery, CountingPort, FinalizeEvent, HttpPort};
use excall_core::codec::Encode;
use excall_core::crypto::{keygen_from_label, Digest, KeyPair};
use excall_core::types::{Address, CallRecord, OracleKeys, Transaction};
use excall_core::vm::abi::call_input;
use excall_core::vm::ExcallPort;
use excall_oracle::{serve, OracleService};

use crate::samples::sample_programs;
use crate::HarnessError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DemoOutcome {
    pub won: bool,
    pub bet_block: u64,
    pub state_root: Digest,
}

fn produce<W: Write + ?Sized>(
    out: &mut W,
    sealer: &mut Chain,
    key: &KeyPair,
    txs: Vec<Transaction>,
    port: &dyn ExcallPort,
) -> Result<excall_core::Block, HarnessError> {
    let now = sealer.head().header.timestamp + sealer.config().block_period_ms;
    let unsealed = sealer.build_block(txs, now, Address::from_public_key(&key.public_key()))?;
    writeln!(out, "block {}: {} tx, {} intention(s)", unsealed.block.header.number, unsealed.block.transactions.len(), unsealed.intentions.len())?;
    for i in &unsealed.intentions {
        writeln!(out, "  intention tx={} call={} template={}", i.tx_index, i.call_index, i.uri_template)?;
    }
    let finalized = sealer.finalize_excalls(unsealed, port)?;
    for e in &finalized.trace {
        match e {
            FinalizeEvent::IntentionFixed(h) => writeln!(out, "  intention hash fixed {}", h.to_hex())?,
            FinalizeEvent::CallIssued { tx_index, call_index, uri } => writeln!(out, "  call tx={tx_index} call={call_index} GET {uri}")?,
            FinalizeEvent::StateRootComputed(r) => writeln!(out, "  state root {}", r.to_hex())?,
        }
    }
    for e in &finalized.block.excall_extension {
        match &e.record {
            CallRecord::Verified(t) => writeln!(
                out,
                "  recorded tx={} call={} response={:?} signature={}…",
                e.tx_index,
                e.call_index,
                String::from_utf8_lossy(&t.response),
                hex_prefix(&t.signature)
            )?,
            other => writeln!(out, "  recorded tx={} call={} {:?}", e.tx_index, e.call_index, other)?,
        }
    }
    let sealed = sealer.seal(finalized, key)?;
    let block = sealed.block.clone();
    sealer.commit_own(sealed)?;
    writeln!(out, "  sealed digest {}", block.digest().to_hex())?;
    Ok(block)
}

fn hex_prefix(b: &[u8]) -> String {
    b.iter().take(8).map(|x| format!("{x:02x}")).collect()
}

pub fn run_demo<W: Write + ?Sized>(out: &mut W) -> Result<DemoOutcome, HarnessError> {
    let service = Arc::new(OracleService::new(keygen_from_label("demo-oracle"), 0.5, 7)?);
    let server = serve("127.0.0.1:0", service.clone())?;
    writeln!(out, "oracle at {} key {}", server.url(), service.public_key().to_hex())?;

    let key = keygen_from_label("demo-sealer");
    let config = ChainConfig::new(
        vec![key.public_key()],
        OracleKeys::new().with(format!("{}/", server.url()), service.public_key()),
    );
    let mut sealer = Chain::new(config.clone())?;
    let mut verifier = Chain::new(config)?;
    let port = CountingPort::new(HttpPort::new(Duration::from_secs(2)));

    let deployer = Address([0xD0; 20]);
    let programs = sample_programs(&server.url())?;
    let deploy = Transaction::deploy(deployer, 0, programs.excall.encode());
    let contract = contract_address(&deployer, 0);
    writeln!(out, "deploying betting contract at {contract}")?;
    let b = produce(out, &mut sealer, &key, vec![deploy], &port)?;
    verifier.apply_block(b)?;

    let punter = Address([0x77; 20]);
    let bet = Transaction::call(punter, 0, contract, call_input("betEXCALL", &[]).expect("non-empty name"));
    writeln!(out, "placing bet from {punter}")?;
    let b = produce(out, &mut sealer, &key, vec![bet.clone()], &port)?;
    let bet_block = b.header.number;
    verifier.apply_block(b)?;
    let receipt = verifier.receipt(&bet.identity()).expect("bet included");
    let won = verifier.winnings(&contract, &punter) == 1;
    writeln!(out, "verifier accepted block {bet_block}: status {:?}, won {won}", receipt.receipt.status)?;
    writeln!(out, "sealer made {} external call(s); the verifier replayed the recorded response offline", port.calls())?;
    let state_root = verifier.head().header.state_root;
    writeln!(out, "state roots match: {}", state_root == sealer.head().header.state_root)?;
    server.shutdown();
    Ok(DemoOutcome { won, bet_block, state_root })
}
