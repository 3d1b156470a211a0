#![allow(dead_code)]

use excall_core::chain::{contract_address, seal_block, Chain, ChainConfig, FinalizedBlock, WorldState};
use excall_core::codec::Encode;
use excall_core::crypto::{keygen, keygen_from_label, sign_response, KeyPair};
use excall_core::types::{Address, Block, Nonce, OracleKeys, ReceiptStatus, Transaction, VerifiableExternalCall};
use excall_core::vm::abi::{address_word, bool_word, call_input, u64_word};
use excall_core::vm::{ExcallPort, PortError};
use excall_harness::sample_programs;

pub const ORACLE_URL: &str = "http://oracle.test";
pub const DEPLOYER: Address = Address([0xD0; 20]);
pub const ORACLE: Address = Address([0x0A; 20]);

pub fn oracle_key() -> KeyPair {
    keygen(&[42; 32]).unwrap()
}

pub fn sealer() -> KeyPair {
    keygen_from_label("sample-sealer")
}

pub fn config() -> ChainConfig {
    ChainConfig::new(vec![sealer().public_key()], OracleKeys::new().with(format!("{ORACLE_URL}/"), oracle_key().public_key()))
}

/// Signs a fixed answer, or one taken from the low bit of the nonce.
pub struct FixedOracle {
    pub answer: Option<u8>,
    pub key: KeyPair,
}

impl FixedOracle {
    pub fn always(answer: u8) -> Self {
        FixedOracle { answer: Some(answer), key: oracle_key() }
    }

    pub fn by_nonce() -> Self {
        FixedOracle { answer: None, key: oracle_key() }
    }
}

impl ExcallPort for FixedOracle {
    fn call(&self, uri: &str, nonce: &Nonce) -> Result<VerifiableExternalCall, PortError> {
        let response = vec![self.answer.unwrap_or(if nonce[0] & 1 == 1 { b'1' } else { b'0' })];
        Ok(VerifiableExternalCall {
            request_uri: uri.into(),
            request_nonce: *nonce,
            public_key: self.key.public_key(),
            signature: sign_response(&self.key, &response, nonce),
            response,
        })
    }
}

pub fn produce(chain: &Chain, txs: Vec<Transaction>, port: &dyn ExcallPort) -> FinalizedBlock {
    let key = sealer();
    let now = chain.head().header.timestamp + chain.config().block_period_ms;
    let unsealed = chain.build_block(txs, now, Address::from_public_key(&key.public_key())).unwrap();
    let f = chain.finalize_excalls(unsealed, port).unwrap();
    chain.seal(f, &key).unwrap()
}

pub fn commit(chain: &mut Chain, txs: Vec<Transaction>, port: &dyn ExcallPort) -> FinalizedBlock {
    let f = produce(chain, txs, port);
    chain.commit_own(f.clone()).unwrap();
    f
}

/// Re-signs a block after tampering, as a dishonest sealer would.
pub fn reseal(block: Block) -> Block {
    let f = FinalizedBlock { block, receipts: vec![], post_state: WorldState::new(), trace: vec![] };
    seal_block(&config(), f, &sealer()).unwrap().block
}

/// Deploys both samples as the next block; returns (standard, excall).
pub fn deploy_into(chain: &mut Chain) -> (Address, Address) {
    let p = sample_programs(ORACLE_URL).unwrap();
    let mut standard = p.standard.encode();
    standard.extend_from_slice(&address_word(&ORACLE));
    let first = chain.state().account_nonce(&DEPLOYER);
    let f = commit(
        chain,
        vec![Transaction::deploy(DEPLOYER, first, standard), Transaction::deploy(DEPLOYER, first + 1, p.excall.encode())],
        &FixedOracle::always(b'1'),
    );
    assert!(f.receipts.iter().all(|r| r.status == ReceiptStatus::Success));
    (contract_address(&DEPLOYER, first), contract_address(&DEPLOYER, first + 1))
}

/// Chain with both samples deployed in block 1.
pub fn deployed() -> (Chain, Address, Address) {
    let mut chain = Chain::new(config()).unwrap();
    let (s, e) = deploy_into(&mut chain);
    (chain, s, e)
}

pub fn begin(contract: Address, punter: Address, nonce: u64) -> Transaction {
    Transaction::call(punter, nonce, contract, call_input("beginBetOracle", &[]).unwrap())
}

pub fn callback(contract: Address, from: Address, nonce: u64, punter: Address, oracle_ref: u64, won: bool) -> Transaction {
    let input = call_input("continueBetOracle", &[address_word(&punter), u64_word(oracle_ref), bool_word(won)]).unwrap();
    Transaction::call(from, nonce, contract, input)
}

pub fn bet_excall(contract: Address, punter: Address, nonce: u64) -> Transaction {
    Transaction::call(punter, nonce, contract, call_input("betEXCALL", &[]).unwrap())
}

/// Outcome of running the three standard-contract checks.
pub struct StandardChecks {
    pub guard_reverted: bool,
    pub winnings_after_win: u64,
    pub first_output: Vec<u8>,
    pub duplicate_output: Vec<u8>,
    pub winnings_after_duplicate: u64,
}

pub fn standard_checks() -> StandardChecks {
    use excall_core::chain::ChainQuery;
    let (mut chain, contract, _) = deployed();
    let punter = Address([0x77; 20]);
    let port = FixedOracle::always(b'1');
    commit(&mut chain, vec![begin(contract, punter, 0)], &port);
    let intruder = Address([0x66; 20]);
    let f = commit(&mut chain, vec![callback(contract, intruder, 0, punter, 0, true)], &port);
    let guard_reverted = f.receipts[0].status == ReceiptStatus::FailedExec && chain.winnings(&contract, &punter) == 0;
    let f = commit(&mut chain, vec![callback(contract, ORACLE, 0, punter, 0, true)], &port);
    let first_output = f.receipts[0].output.clone();
    let winnings_after_win = chain.winnings(&contract, &punter);
    let f = commit(&mut chain, vec![callback(contract, ORACLE, 1, punter, 0, true)], &port);
    StandardChecks {
        guard_reverted,
        winnings_after_win,
        first_output,
        duplicate_output: f.receipts[0].output.clone(),
        winnings_after_duplicate: chain.winnings(&contract, &punter),
    }
}
