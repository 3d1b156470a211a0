mod common;

use common::*;
use excall_core::chain::ChainQuery;
use excall_core::types::{Address, ReceiptStatus};
use excall_core::vm::abi::{bool_word, event_topic, pending_key, u64_word};
use excall_harness::sample_programs;

#[test]
fn oracle_only_guard() {
    assert!(standard_checks().guard_reverted);
}

#[test]
fn callback_settles_once() {
    let c = standard_checks();
    assert_eq!(c.first_output, bool_word(true).to_vec());
    assert_eq!(c.winnings_after_win, 1);
    assert_eq!(c.duplicate_output, bool_word(false).to_vec());
    assert_eq!(c.winnings_after_duplicate, 1);
}

#[test]
fn losing_callback_clears_pending_without_winnings() {
    let (mut chain, contract, _) = deployed();
    let punter = Address([0x71; 20]);
    let port = FixedOracle::always(b'0');
    let f = commit(&mut chain, vec![begin(contract, punter, 0), begin(contract, punter, 1)], &port);
    let topic = event_topic("BetPlaced");
    assert!(f.receipts.iter().all(|r| r.events.len() == 1 && r.events[0].topic == topic));
    assert_eq!(chain.storage_at(&contract, &pending_key(&punter, 1)), u64_word(1));
    let f = commit(&mut chain, vec![callback(contract, ORACLE, 0, punter, 1, false)], &port);
    assert_eq!(f.receipts[0].output, bool_word(true).to_vec());
    assert_eq!(chain.storage_at(&contract, &pending_key(&punter, 1)), [0u8; 32]);
    assert_eq!(chain.storage_at(&contract, &pending_key(&punter, 0)), u64_word(1));
    assert_eq!(chain.winnings(&contract, &punter), 0);
}

#[test]
fn excall_bet_wins_in_its_own_block() {
    let (mut chain, _, contract) = deployed();
    let punter = Address([0x72; 20]);
    let f = commit(&mut chain, vec![bet_excall(contract, punter, 0)], &FixedOracle::always(b'1'));
    assert_eq!(f.receipts[0].status, ReceiptStatus::Success);
    assert_eq!(f.block.excall_extension.len(), 1);
    assert_eq!(chain.winnings(&contract, &punter), 1);
    commit(&mut chain, vec![bet_excall(contract, punter, 1)], &FixedOracle::always(b'0'));
    assert_eq!(chain.winnings(&contract, &punter), 1);
}

#[test]
fn excall_program_is_smaller() {
    let p = sample_programs(ORACLE_URL).unwrap();
    let (e, s) = (p.excall.instruction_count(), p.standard.instruction_count());
    assert!(e < s, "excall {e} vs standard {s}");
}

#[test]
fn oracle_url_is_substituted() {
    let p = sample_programs("http://10.0.0.5:9000/").unwrap();
    let text = excall_core::vm::disassemble(&p.excall);
    assert!(text.contains("http://10.0.0.5:9000/excallrand?nonce={nonce}"), "{text}");
    assert!(!text.contains("localhost:8080"));
}
