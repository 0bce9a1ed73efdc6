//! Stable hashing for seeds and checksums. Values never change across
//! platforms, processes or toolchain versions.

use sha2::{Digest, Sha256};

/// 64-bit hash of `seed` and `parts`. Parts are length-prefixed so that
/// ("ab", "c") and ("a", "bc") differ.
pub fn stable_hash(seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}
