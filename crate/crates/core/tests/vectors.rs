//! Conformance against vectors produced by an independent Ed25519/SHA-256
//! implementation.

use excall_core::crypto::{keygen, sign_response, verify_response, Digest};
use excall_core::types::derive_call_nonce;

fn records(name: &str) -> Vec<Vec<String>> {
    let path = format!("{}/tests/vectors/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|f| f.trim().to_string()).collect())
        .collect()
}

fn bytes(h: &str) -> Vec<u8> {
    hex::decode(h).unwrap()
}

fn arr(h: &str) -> [u8; 32] {
    bytes(h).try_into().unwrap()
}

#[test]
fn public_keys_match() {
    let recs = records("public_keys.txt");
    assert!(recs.len() >= 3);
    for r in recs {
        assert_eq!(keygen(&bytes(&r[0])).unwrap().public_key().to_hex(), r[1]);
    }
}

#[test]
fn seed_one_public_key_is_frozen() {
    let pk = keygen(&[1u8; 32]).unwrap().public_key();
    assert_eq!(pk.to_hex(), "8a88e3dd7409f195fd52db2d3cba5d72ca6709bf1d94121bf3748801b40f6f5c");
}

#[test]
fn signatures_match_and_verify() {
    let recs = records("sign_response.txt");
    assert_eq!(recs.len(), 32);
    for r in recs {
        let key = keygen(&bytes(&r[0])).unwrap();
        let (resp, nonce, sig) = (bytes(&r[1]), arr(&r[2]), bytes(&r[3]));
        assert_eq!(sign_response(&key, &resp, &nonce), sig, "seed {}", r[0]);
        assert!(verify_response(&key.public_key(), &resp, &nonce, &sig));
    }
}

#[test]
fn call_nonces_match() {
    for r in records("call_nonces.txt") {
        let n = derive_call_nonce(&Digest(arr(&r[0])), r[1].parse().unwrap(), r[2].parse().unwrap());
        assert_eq!(hex::encode(n), r[3]);
    }
}
