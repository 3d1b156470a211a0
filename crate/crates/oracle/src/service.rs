use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use excall_core::chain::SignedEnvelope;
use excall_core::crypto::{KeyPair, PublicKey};
use excall_core::types::Nonce;
use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;
use tiny_http::{Header, Request, Response, Server};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("win probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("cannot bind {addr}: {reason}")]
    Bind { addr: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ServiceStats {
    pub served: u64,
    pub wins: u64,
}

/// Draws outcomes from a seeded stream and signs them over the caller's nonce.
pub struct OracleService {
    key: KeyPair,
    win_probability: f64,
    rng: Mutex<ChaCha20Rng>,
    served: AtomicU64,
    wins: AtomicU64,
    latency: Duration,
}

impl OracleService {
    pub fn new(key: KeyPair, win_probability: f64, seed: u64) -> Result<Self, ServiceError> {
        if !(0.0..=1.0).contains(&win_probability) {
            return Err(ServiceError::InvalidProbability(win_probability));
        }
        Ok(OracleService {
            key,
            win_probability,
            rng: Mutex::new(ChaCha20Rng::seed_from_u64(seed)),
            served: AtomicU64::new(0),
            wins: AtomicU64::new(0),
            latency: Duration::ZERO,
        })
    }

    /// Delay added before every HTTP reply, to model a remote service.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public_key()
    }

    /// Next outcome of the stream.
    pub fn draw(&self) -> bool {
        let won = self.rng.lock().expect("rng lock").gen_bool(self.win_probability);
        self.served.fetch_add(1, Ordering::SeqCst);
        if won {
            self.wins.fetch_add(1, Ordering::SeqCst);
        }
        won
    }

    pub fn respond(&self, nonce: &Nonce) -> SignedEnvelope {
        let response: &[u8] = if self.draw() { b"1" } else { b"0" };
        SignedEnvelope::sign(&self.key, response, nonce)
    }

    pub fn stats(&self) -> ServiceStats {
        ServiceStats { served: self.served.load(Ordering::SeqCst), wins: self.wins.load(Ordering::SeqCst) }
    }
}

fn parse_nonce(query: &str) -> Option<Nonce> {
    let value = url::form_urlencoded::parse(query.as_bytes()).find(|(k, _)| k == "nonce")?.1;
    if value.len() != 64 {
        return None;
    }
    hex::decode(value.as_ref()).ok()?.try_into().ok()
}

fn handle(service: &OracleService, req: Request) {
    let url = req.url().to_string();
    let (path, query) = url.split_once('?').unwrap_or((&url, ""));
    let reply = match path {
        "/health" => Response::from_string("ok"),
        "/excallrand" => match parse_nonce(query) {
            None => Response::from_string("missing or malformed nonce").with_status_code(400),
            Some(nonce) => {
                if !service.latency.is_zero() {
                    thread::sleep(service.latency);
                }
                let body = serde_json::to_string(&service.respond(&nonce)).expect("envelope serializes");
                let json = Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).expect("static header");
                Response::from_string(body).with_header(json)
            }
        },
        _ => Response::from_string("not found").with_status_code(404),
    };
    if let Err(e) = req.respond(reply) {
        debug!("client went away: {e}");
    }
}

/// A running service; stops when dropped.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) {
        self.stop_workers();
    }

    fn stop_workers(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_workers();
    }
}

const WORKERS: usize = 4;

/// Serves `GET /excallrand?nonce=<64 hex>` and `GET /health` on `bind`.
pub fn serve(bind: &str, service: Arc<OracleService>) -> Result<ServerHandle, ServiceError> {
    let server = Server::http(bind).map_err(|e| ServiceError::Bind { addr: bind.into(), reason: e.to_string() })?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| ServiceError::Bind { addr: bind.into(), reason: "not an ip socket".into() })?;
    info!("oracle service on http://{addr} with key {}", service.public_key().to_hex());
    let server = Arc::new(server);
    let stop = Arc::new(AtomicBool::new(false));
    let workers = (0..WORKERS)
        .map(|_| {
            let (server, stop, service) = (server.clone(), stop.clone(), service.clone());
            thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    match server.recv_timeout(Duration::from_millis(50)) {
                        Ok(Some(req)) => handle(&service, req),
                        Ok(None) => {}
                        Err(e) => {
                            debug!("accept failed: {e}");
                            break;
                        }
                    }
                }
            })
        })
        .collect();
    Ok(ServerHandle { addr, stop, workers })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nonce_parsing() {
        let hex64 = "ab".repeat(32);
        assert_eq!(parse_nonce(&format!("nonce={hex64}")), Some([0xab; 32]));
        assert_eq!(parse_nonce(&format!("x=1&nonce={hex64}")), Some([0xab; 32]));
        assert_eq!(parse_nonce("nonce=abc"), None);
        assert_eq!(parse_nonce(&format!("nonce={}", "zz".repeat(32))), None);
        assert_eq!(parse_nonce(""), None);
    }

    #[test]
    fn probability_bounds() {
        let key = excall_core::crypto::keygen(&[1; 32]).unwrap();
        assert!(OracleService::new(key.clone(), 1.5, 0).is_err());
        assert!(OracleService::new(key, 0.0, 0).is_ok());
    }
}
