//! Seed derivation. Every stochastic step draws from its own ChaCha stream so
//! that changing one concern (say, the support seed) never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Mixes a base seed with a namespace and an arbitrary key into a new 64-bit seed.
pub fn derive(base: u64, namespace: &str, key: &[u8]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update((namespace.len() as u64).to_le_bytes());
    h.update(namespace.as_bytes());
    h.update(key);
    let digest = h.finalize();
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(out)
}

pub fn rng(base: u64, namespace: &str) -> Rng {
    Rng::seed_from_u64(derive(base, namespace, &[]))
}

pub fn rng_for(base: u64, namespace: &str, key: &[u8]) -> Rng {
    Rng::seed_from_u64(derive(base, namespace, key))
}

/// Hex SHA-256 of arbitrary bytes, truncated to 16 characters.
pub fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn namespaces_are_independent() {
        assert_ne!(derive(7, "split", &[]), derive(7, "support", &[]));
        assert_eq!(derive(7, "split", b"x"), derive(7, "split", b"x"));
        assert_ne!(derive(7, "split", b"x"), derive(8, "split", b"x"));
    }
}
