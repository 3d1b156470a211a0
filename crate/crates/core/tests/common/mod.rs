#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};

use excall_core::chain::{contract_address, Chain, ChainConfig, FinalizedBlock};
use excall_core::codec::Encode;
use excall_core::crypto::{keygen, keygen_from_label, sign_response, KeyPair};
use excall_core::types::{Address, Nonce, OracleKeys, Transaction, VerifiableExternalCall};
use excall_core::vm::abi::call_input;
use excall_core::vm::{assemble, ExcallPort, PortError};

pub const BET: &str = r#"
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

pub const DEPLOYER: Address = Address([1; 20]);

pub fn oracle_key() -> KeyPair {
    keygen(&[42; 32]).unwrap()
}

pub fn sealer(i: usize) -> KeyPair {
    keygen_from_label(&format!("sealer-{i}"))
}

pub fn config() -> ChainConfig {
    ChainConfig::new(
        vec![sealer(0).public_key(), sealer(1).public_key()],
        OracleKeys::new().with("http://oracle.test/", oracle_key().public_key()),
    )
}

/// Answers '1' or '0' from the low bit of the nonce, so outcomes look random
/// yet replay identically.
pub struct NonceOracle {
    pub calls: AtomicUsize,
}

impl NonceOracle {
    pub fn new() -> Self {
        NonceOracle { calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ExcallPort for NonceOracle {
    fn call(&self, request_uri: &str, nonce: &Nonce) -> Result<VerifiableExternalCall, PortError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let key = oracle_key();
        let response = vec![if nonce[0] & 1 == 1 { b'1' } else { b'0' }];
        Ok(VerifiableExternalCall {
            request_uri: request_uri.into(),
            request_nonce: *nonce,
            public_key: key.public_key(),
            signature: sign_response(&key, &response, nonce),
            response,
        })
    }
}

pub fn produce(chain: &Chain, txs: Vec<Transaction>, port: &dyn ExcallPort) -> FinalizedBlock {
    let number = chain.head().header.number + 1;
    let key = sealer((number % 2) as usize);
    let now = chain.head().header.timestamp + chain.config().block_period_ms;
    let unsealed = chain.build_block(txs, now, Address::from_public_key(&key.public_key())).unwrap();
    let f = chain.finalize_excalls(unsealed, port).unwrap();
    chain.seal(f, &key).unwrap()
}

pub fn deploy_tx() -> Transaction {
    Transaction::deploy(DEPLOYER, 0, assemble(BET).unwrap().encode())
}

pub fn bet_address() -> Address {
    contract_address(&DEPLOYER, 0)
}

pub fn bet(punter: Address, nonce: u64) -> Transaction {
    Transaction::call(punter, nonce, bet_address(), call_input("betEXCALL", &[]).unwrap())
}
