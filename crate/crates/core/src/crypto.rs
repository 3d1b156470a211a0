//! Key management, hashing and the signed-response contract.
//!
//! Responses from external services are signed over a domain-separated
//! payload: `EXCALL-RESP-V1 ‖ nonce ‖ response`. Binding the nonce inside the
//! signed bytes means a response captured for one request can never be
//! presented as the answer to another.

use std::fmt;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// Domain tag prefixed to every signed external-call response.
pub const RESPONSE_DOMAIN: &[u8] = b"EXCALL-RESP-V1";

/// Domain tag prefixed to block seals.
pub const SEAL_DOMAIN: &[u8] = b"EXCALL-SEAL-V1";

/// Length of an encoded signature.
pub const SIGNATURE_LEN: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("seed must be 32 bytes, got {0}")]
    InvalidSeed(usize),
    #[error("invalid public key encoding")]
    InvalidPublicKey,
}

/// A 32-byte SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// A 32-byte Ed25519 verification key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PublicKey(pub [u8; 32]);

impl PublicKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Parses a 64-character hex string.
    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let bytes = hex::decode(s).map_err(|_| CryptoError::InvalidPublicKey)?;
        let arr: [u8; 32] = bytes.try_into().map_err(|_| CryptoError::InvalidPublicKey)?;
        Ok(PublicKey(arr))
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", &self.to_hex()[..16])
    }
}

/// Signing key material together with its public half.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
    public: PublicKey,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("public", &self.public).finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn public_key(&self) -> PublicKey {
        self.public
    }

    /// The 32-byte secret seed.
    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    /// Signs arbitrary bytes. Deterministic.
    pub fn sign(&self, message: &[u8]) -> Vec<u8> {
        self.signing.sign(message).to_bytes().to_vec()
    }
}

/// Derives a key pair from 32 bytes of entropy. The same seed always yields
/// the same key pair.
pub fn keygen(seed: &[u8]) -> Result<KeyPair, CryptoError> {
    let seed: [u8; 32] = seed.try_into().map_err(|_| CryptoError::InvalidSeed(seed.len()))?;
    let signing = SigningKey::from_bytes(&seed);
    let public = PublicKey(signing.verifying_key().to_bytes());
    Ok(KeyPair { signing, public })
}

/// Derives a key pair from a human-readable label by hashing it to a seed.
pub fn keygen_from_label(label: &str) -> KeyPair {
    keygen(&hash_bytes(label.as_bytes()).0).expect("digest is 32 bytes")
}

pub fn hash_bytes(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// Hashes the concatenation of several byte slices without allocating.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    Digest(hasher.finalize().into())
}

fn response_payload(response: &[u8], nonce: &[u8; 32]) -> Vec<u8> {
    let mut payload = Vec::with_capacity(RESPONSE_DOMAIN.len() + 32 + response.len());
    payload.extend_from_slice(RESPONSE_DOMAIN);
    payload.extend_from_slice(nonce);
    payload.extend_from_slice(response);
    payload
}

pub fn sign_response(key: &KeyPair, response: &[u8], nonce: &[u8; 32]) -> Vec<u8> {
    key.sign(&response_payload(response, nonce))
}

/// Checks a response signature. Malformed keys or signatures yield `false`.
pub fn verify_response(public_key: &PublicKey, response: &[u8], nonce: &[u8; 32], signature: &[u8]) -> bool {
    verify_raw(public_key, &response_payload(response, nonce), signature)
}

/// Verifies an Ed25519 signature over `message`; any encoding problem is `false`.
pub fn verify_raw(public_key: &PublicKey, message: &[u8], signature: &[u8]) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(&public_key.0) else {
        return false;
    };
    let Ok(sig) = Signature::from_slice(signature) else {
        return false;
    };
    vk.verify(message, &sig).is_ok()
}
