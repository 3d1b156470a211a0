//! The two shipped betting programs.

use excall_core::chain::{contract_address, TxSubmit};
use excall_core::codec::Encode;
use excall_core::types::{Address, Transaction};
use excall_core::vm::abi::address_word;
use excall_core::vm::{assemble, ContractProgram};

use crate::HarnessError;

/// Bet placed by one transaction and settled by a later oracle callback.
pub const STANDARD_SOURCE: &str = include_str!("../contracts/standard_oracle.easm");
/// Bet settled inside its own transaction through EXCALL.
pub const EXCALL_SOURCE: &str = include_str!("../contracts/excall_bet.easm");

const PLACEHOLDER_BASE: &str = "http://localhost:8080";

pub struct SamplePrograms {
    pub standard: ContractProgram,
    pub excall: ContractProgram,
}

/// Assembles both programs, pointing the EXCALL at `oracle_url`.
pub fn sample_programs(oracle_url: &str) -> Result<SamplePrograms, HarnessError> {
    let standard = assemble(STANDARD_SOURCE)
        .map_err(|e| HarnessError::Assemble { name: "standard_oracle.easm", detail: e.to_string() })?;
    let source = EXCALL_SOURCE.replace(PLACEHOLDER_BASE, oracle_url.trim_end_matches('/'));
    let excall =
        assemble(&source).map_err(|e| HarnessError::Assemble { name: "excall_bet.easm", detail: e.to_string() })?;
    Ok(SamplePrograms { standard, excall })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Deployed {
    pub standard: Address,
    pub excall: Address,
}

/// Submits both deployments from `deployer`, using nonces `first_nonce` and
/// `first_nonce + 1`. The standard contract trusts `oracle` for callbacks.
pub fn deploy_samples(
    sink: &dyn TxSubmit,
    deployer: Address,
    first_nonce: u64,
    oracle: Address,
    oracle_url: &str,
) -> Result<Deployed, HarnessError> {
    let p = sample_programs(oracle_url)?;
    let mut standard = p.standard.encode();
    standard.extend_from_slice(&address_word(&oracle));
    sink.submit_tx(Transaction::deploy(deployer, first_nonce, standard))?;
    sink.submit_tx(Transaction::deploy(deployer, first_nonce + 1, p.excall.encode()))?;
    Ok(Deployed {
        standard: contract_address(&deployer, first_nonce),
        excall: contract_address(&deployer, first_nonce + 1),
    })
}
