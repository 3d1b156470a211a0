//! Word layout conventions shared by contracts and off-chain callers.
//!
//! Numbers are big-endian and right-aligned in a 32-byte word. Addresses are
//! left-aligned (bytes 0..20), which leaves bytes 20..32 free so storage keys
//! for per-address maps can be formed with plain `ADD`:
//!
//! ```text
//! winnings[a]    = a ‖ "WINS" ‖ 0^8
//! pending[a][r]  = a ‖ "PEND" ‖ r (u64)
//! ```

use thiserror::Error;

use crate::crypto::hash_bytes;
use crate::types::Address;

pub type Word = [u8; 32];

/// Storage key through which the current EXCALL response is readable.
pub const RESPONSE_REGISTER: Word = [0xFF; 32];

pub const WINNINGS_TAG: [u8; 4] = *b"WINS";
pub const PENDING_TAG: [u8; 4] = *b"PEND";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AbiError {
    #[error("function name must be non-empty")]
    EmptyName,
}

/// First four bytes of the hash of a function name.
pub fn selector(name: &str) -> Result<[u8; 4], AbiError> {
    if name.is_empty() {
        return Err(AbiError::EmptyName);
    }
    let d = hash_bytes(name.as_bytes());
    Ok([d.0[0], d.0[1], d.0[2], d.0[3]])
}

pub fn event_topic(name: &str) -> Word {
    hash_bytes(name.as_bytes()).0
}

pub fn u64_word(n: u64) -> Word {
    let mut w = [0u8; 32];
    w[24..].copy_from_slice(&n.to_be_bytes());
    w
}

/// The low 8 bytes, if the upper 24 are zero.
pub fn word_u64(w: &Word) -> Option<u64> {
    if w[..24].iter().any(|b| *b != 0) {
        return None;
    }
    Some(u64::from_be_bytes(w[24..].try_into().expect("eight bytes")))
}

pub fn bool_word(b: bool) -> Word {
    u64_word(b as u64)
}

pub fn address_word(a: &Address) -> Word {
    let mut w = [0u8; 32];
    w[..20].copy_from_slice(&a.0);
    w
}

pub fn word_address(w: &Word) -> Address {
    let mut a = [0u8; 20];
    a.copy_from_slice(&w[..20]);
    Address(a)
}

pub fn winnings_key(a: &Address) -> Word {
    let mut w = address_word(a);
    w[20..24].copy_from_slice(&WINNINGS_TAG);
    w
}

pub fn pending_key(a: &Address, oracle_ref: u64) -> Word {
    let mut w = address_word(a);
    w[20..24].copy_from_slice(&PENDING_TAG);
    w[24..].copy_from_slice(&oracle_ref.to_be_bytes());
    w
}

/// Call input: selector followed by 32-byte argument words.
pub fn call_input(function: &str, args: &[Word]) -> Result<Vec<u8>, AbiError> {
    let mut out = selector(function)?.to_vec();
    for a in args {
        out.extend_from_slice(a);
    }
    Ok(out)
}

/// Splits event data into 32-byte words; a partial trailing chunk is dropped.
pub fn data_words(data: &[u8]) -> Vec<Word> {
    data.chunks_exact(32).map(|c| c.try_into().expect("32-byte chunk")).collect()
}

pub(crate) fn add(a: &Word, b: &Word) -> Word {
    let mut out = [0u8; 32];
    let mut carry = 0u16;
    for i in (0..32).rev() {
        let s = a[i] as u16 + b[i] as u16 + carry;
        out[i] = s as u8;
        carry = s >> 8;
    }
    out
}

pub(crate) fn sub(a: &Word, b: &Word) -> Word {
    let mut out = [0u8; 32];
    let mut borrow = 0i16;
    for i in (0..32).rev() {
        let mut d = a[i] as i16 - b[i] as i16 - borrow;
        borrow = 0;
        if d < 0 {
            d += 256;
            borrow = 1;
        }
        out[i] = d as u8;
    }
    out
}
