use std::collections::BTreeMap;
use std::sync::Arc;

use crate::codec::{put_u32, put_u64, Encode};
use crate::crypto::{hash_bytes, Digest};
use crate::types::Address;
use crate::vm::abi::Word;
use crate::vm::ContractProgram;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractAccount {
    pub program: Arc<ContractProgram>,
    pub code_hash: Digest,
    pub storage: BTreeMap<Word, Word>,
}

/// Account nonces, deployed programs and their storage.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WorldState {
    nonces: BTreeMap<Address, u64>,
    contracts: BTreeMap<Address, ContractAccount>,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Next expected account nonce.
    pub fn account_nonce(&self, a: &Address) -> u64 {
        self.nonces.get(a).copied().unwrap_or(0)
    }

    pub(crate) fn set_account_nonce(&mut self, a: Address, n: u64) {
        self.nonces.insert(a, n);
    }

    pub fn contract(&self, a: &Address) -> Option<&ContractAccount> {
        self.contracts.get(a)
    }

    pub(crate) fn contract_mut(&mut self, a: &Address) -> Option<&mut ContractAccount> {
        self.contracts.get_mut(a)
    }

    pub(crate) fn insert_contract(&mut self, a: Address, program: ContractProgram, storage: BTreeMap<Word, Word>) {
        let code_hash = hash_bytes(&program.encode());
        self.contracts.insert(a, ContractAccount { program: Arc::new(program), code_hash, storage });
    }

    pub fn storage_at(&self, contract: &Address, key: &Word) -> Word {
        self.contracts.get(contract).and_then(|c| c.storage.get(key)).copied().unwrap_or([0u8; 32])
    }

    pub fn contracts(&self) -> impl Iterator<Item = (&Address, &ContractAccount)> {
        self.contracts.iter()
    }

    /// Digest over the sorted, canonically encoded state.
    pub fn state_root(&self) -> Digest {
        let mut out = Vec::new();
        put_u32(&mut out, self.nonces.len() as u32);
        for (a, n) in &self.nonces {
            out.extend_from_slice(&a.0);
            put_u64(&mut out, *n);
        }
        put_u32(&mut out, self.contracts.len() as u32);
        for (a, c) in &self.contracts {
            out.extend_from_slice(&a.0);
            out.extend_from_slice(&c.code_hash.0);
            put_u32(&mut out, c.storage.len() as u32);
            for (k, v) in &c.storage {
                out.extend_from_slice(k);
                out.extend_from_slice(v);
            }
        }
        hash_bytes(&out)
    }
}
