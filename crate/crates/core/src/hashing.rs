//! Stable 64-bit content hashing.
//!
//! Values must be identical across runs, hosts, and toolchain versions, so
//! `std::hash` is not an option. We take the first eight bytes of SHA-256.

use sha2::{Digest, Sha256};

pub fn content_hash(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

/// Hash over a sequence of byte slices, each length-prefixed so that
/// `["ab", "c"]` and `["a", "bc"]` differ.
pub fn content_hash_parts(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

/// Derive a child seed from a parent seed and a stable key.
pub fn fan_out_seed(seed: u64, key: &[u8]) -> u64 {
    content_hash_parts(&[&seed.to_le_bytes(), key])
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
