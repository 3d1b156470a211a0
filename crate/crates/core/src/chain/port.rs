//! HTTP transport for external calls.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::crypto::{sign_response, KeyPair, PublicKey};
use crate::types::{Nonce, VerifiableExternalCall};
use crate::vm::{ExcallPort, PortError};

/// JSON body of a signed service reply.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedEnvelope {
    /// Base64 response bytes.
    pub response: String,
    /// Hex nonce the reply was signed for.
    pub nonce: String,
    /// Hex Ed25519 public key.
    pub pubkey: String,
    /// Base64 signature.
    pub sig: String,
}

impl SignedEnvelope {
    pub fn sign(key: &KeyPair, response: &[u8], nonce: &Nonce) -> Self {
        SignedEnvelope {
            response: B64.encode(response),
            nonce: hex::encode(nonce),
            pubkey: key.public_key().to_hex(),
            sig: B64.encode(sign_response(key, response, nonce)),
        }
    }

    /// Decodes the envelope into a tuple for `request_uri`. The signature is
    /// not checked here.
    pub fn into_tuple(self, request_uri: &str) -> Result<VerifiableExternalCall, String> {
        let response = B64.decode(&self.response).map_err(|e| format!("response: {e}"))?;
        let nonce: Nonce = hex::decode(&self.nonce)
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| "nonce must be 32 hex bytes".to_string())?;
        let public_key = PublicKey::from_hex(&self.pubkey).map_err(|e| format!("pubkey: {e}"))?;
        let signature = B64.decode(&self.sig).map_err(|e| format!("sig: {e}"))?;
        Ok(VerifiableExternalCall { request_uri: request_uri.to_string(), request_nonce: nonce, public_key, response, signature })
    }
}

/// Blocking HTTP GET port. Timeouts, refused connections and non-2xx
/// statuses all surface as [`PortError::NoResponse`].
pub struct HttpPort {
    agent: ureq::Agent,
}

impl HttpPort {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        HttpPort { agent }
    }
}

impl ExcallPort for HttpPort {
    fn call(&self, request_uri: &str, nonce: &Nonce) -> Result<VerifiableExternalCall, PortError> {
        let mut resp = self.agent.get(request_uri).call().map_err(|e| PortError::NoResponse(e.to_string()))?;
        let body = resp.body_mut().read_to_string().map_err(|e| PortError::NoResponse(e.to_string()))?;
        let env: SignedEnvelope = serde_json::from_str(&body).map_err(|e| PortError::Malformed(e.to_string()))?;
        let tuple = env.into_tuple(request_uri).map_err(PortError::Malformed)?;
        if &tuple.request_nonce != nonce {
            return Err(PortError::Malformed("reply signed for a different nonce".into()));
        }
        Ok(tuple)
    }
}

/// Counts calls passing through to `inner`.
pub struct CountingPort<P> {
    inner: P,
    calls: AtomicU64,
}

impl<P: ExcallPort> CountingPort<P> {
    pub fn new(inner: P) -> Self {
        CountingPort { inner, calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: ExcallPort> ExcallPort for CountingPort<P> {
    fn call(&self, request_uri: &str, nonce: &Nonce) -> Result<VerifiableExternalCall, PortError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.call(request_uri, nonce)
    }
}
