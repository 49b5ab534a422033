use sha2::{Digest, Sha256};

/// Independent sub-seed for a named purpose, so that adding a consumer of
/// randomness never shifts the streams of the others.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}
