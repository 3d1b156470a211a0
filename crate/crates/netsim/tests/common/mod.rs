#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use excall_core::chain::{contract_address, ChainConfig, ChainQuery, TxSubmit};
use excall_core::codec::Encode;
use excall_core::crypto::{keygen, keygen_from_label, sign_response, KeyPair};
use excall_core::types::{Address, Nonce, OracleKeys, Transaction, VerifiableExternalCall};
use excall_core::vm::abi::call_input;
use excall_core::vm::{assemble, ExcallPort, PortError};
use excall_netsim::{ClockMode, Latency, NodeHandle, NodeRole, SimNetwork};

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

pub fn sealer_key() -> KeyPair {
    keygen_from_label("netsim-sealer")
}

pub fn config(period_ms: u64) -> ChainConfig {
    let mut c = ChainConfig::new(
        vec![sealer_key().public_key()],
        OracleKeys::new().with("http://oracle.test/", oracle_key().public_key()),
    );
    c.block_period_ms = period_ms;
    c
}

/// Signs '1' or '0' from the low bit of the nonce.
pub struct NonceOracle;

impl ExcallPort for NonceOracle {
    fn call(&self, uri: &str, nonce: &Nonce) -> Result<VerifiableExternalCall, PortError> {
        let key = oracle_key();
        let response = vec![if nonce[0] & 1 == 1 { b'1' } else { b'0' }];
        Ok(VerifiableExternalCall {
            request_uri: uri.into(),
            request_nonce: *nonce,
            public_key: key.public_key(),
            signature: sign_response(&key, &response, nonce),
            response,
        })
    }
}

pub fn sealer_role() -> NodeRole {
    NodeRole::sealer(sealer_key(), Arc::new(NonceOracle))
}

pub fn network(period_ms: u64, latency: Latency, mode: ClockMode, verifiers: usize) -> (SimNetwork, NodeHandle, Vec<NodeHandle>) {
    let net = SimNetwork::new(&config(period_ms), latency, mode);
    let s = net.spawn_node(sealer_role(), config(period_ms)).unwrap();
    let vs = (0..verifiers).map(|_| net.spawn_node(NodeRole::Verifier, config(period_ms)).unwrap()).collect();
    (net, s, vs)
}

pub fn bet_address() -> Address {
    contract_address(&DEPLOYER, 0)
}

pub fn deploy(sink: &dyn TxSubmit) {
    sink.submit_tx(Transaction::deploy(DEPLOYER, 0, assemble(BET).unwrap().encode())).unwrap();
}

pub fn bet(punter: Address, nonce: u64) -> Transaction {
    Transaction::call(punter, nonce, bet_address(), call_input("betEXCALL", &[]).unwrap())
}

pub fn wait_height(net: &SimNetwork, node: &NodeHandle, h: u64, timeout: Duration) -> bool {
    net.run_until(|| node.height() >= h, timeout)
}
