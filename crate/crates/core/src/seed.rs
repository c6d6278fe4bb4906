//! Deterministic fan-out of one root seed into named component seeds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub use rand::RngCore;

/// Generator behind every seeded component.
pub type SeededRng = ChaCha8Rng;

/// Derives a stable sub-seed for `name` from `root`.
pub fn sub_seed(root: u64, name: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Seeded generator for a named component.
pub fn component_rng(root: u64, name: &str) -> SeededRng {
    ChaCha8Rng::seed_from_u64(sub_seed(root, name))
}
