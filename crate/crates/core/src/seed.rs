//! Seed derivation. Every random choice in the toolkit is keyed by
//! `(global seed, purpose, record key)`, so results do not depend on the
//! order in which records are visited or on the number of threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(seed: u64, purpose: &str, key: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((purpose.len() as u64).to_le_bytes());
    hasher.update(purpose.as_bytes());
    hasher.update(key.as_bytes());
    hasher.finalize().into()
}

pub fn rng_for(seed: u64, purpose: &str, key: &str) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(seed, purpose, key))
}
