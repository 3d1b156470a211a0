use serde::{Deserialize, Serialize};

use crate::codec::{put_bytes, put_u32, put_u64};
use crate::crypto::{hash_bytes, Digest, PublicKey};
use crate::types::{Address, OracleKeys};
use crate::vm::{ExecLimits, DEFAULT_MAX_EXCALLS, DEFAULT_STEP_LIMIT};

use super::ChainError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub block_period_ms: u64,
    /// Authority set, in round-robin order: block `n` is sealed by `sealers[n % len]`.
    pub sealers: Vec<PublicKey>,
    pub oracle_keys: OracleKeys,
    pub step_limit: u64,
    pub max_excalls_per_tx: u32,
    pub excall_timeout_ms: u64,
    /// Block capacity, standing in for a gas limit.
    pub max_txs_per_block: usize,
    pub genesis_timestamp: u64,
}

impl ChainConfig {
    pub fn new(sealers: Vec<PublicKey>, oracle_keys: OracleKeys) -> Self {
        ChainConfig {
            block_period_ms: 500,
            sealers,
            oracle_keys,
            step_limit: DEFAULT_STEP_LIMIT,
            max_excalls_per_tx: DEFAULT_MAX_EXCALLS,
            excall_timeout_ms: 2_000,
            max_txs_per_block: 200,
            genesis_timestamp: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        if self.block_period_ms == 0 {
            return Err(ChainError::Config("block period must be positive".into()));
        }
        if self.sealers.is_empty() {
            return Err(ChainError::Config("at least one sealer is required".into()));
        }
        if self.max_txs_per_block == 0 {
            return Err(ChainError::Config("blocks must hold at least one transaction".into()));
        }
        Ok(())
    }

    pub fn limits(&self) -> ExecLimits {
        ExecLimits { step_limit: self.step_limit, max_excalls: self.max_excalls_per_tx }
    }

    /// The authority expected to seal block `number`.
    pub fn sealer_for(&self, number: u64) -> PublicKey {
        self.sealers[(number % self.sealers.len() as u64) as usize]
    }

    pub fn sealer_address_for(&self, number: u64) -> Address {
        Address::from_public_key(&self.sealer_for(number))
    }

    /// Commitment to every consensus-relevant parameter; seeds the genesis block.
    pub fn digest(&self) -> Digest {
        let mut out = Vec::new();
        put_u64(&mut out, self.block_period_ms);
        put_u32(&mut out, self.sealers.len() as u32);
        for s in &self.sealers {
            out.extend_from_slice(&s.0);
        }
        let pins: Vec<_> = self.oracle_keys.iter().collect();
        put_u32(&mut out, pins.len() as u32);
        for (prefix, key) in pins {
            put_bytes(&mut out, prefix.as_bytes());
            out.extend_from_slice(&key.0);
        }
        put_u64(&mut out, self.step_limit);
        put_u32(&mut out, self.max_excalls_per_tx);
        put_u64(&mut out, self.max_txs_per_block as u64);
        put_u64(&mut out, self.genesis_timestamp);
        hash_bytes(&out)
    }
}
