//! Deterministic seed derivation.
//!
//! Every random stream in the crate is keyed by a tuple of integers (master
//! seed, step, phase, particle index, ...). Streams never depend on execution
//! order, so parallel loops reproduce sequential results bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a key tuple into a 64-bit seed.
#[inline]
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x243F_6A88_85A3_08D3;
    for &p in parts {
        h = splitmix64(h ^ splitmix64(p));
    }
    h
}

#[inline]
pub fn stream(parts: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn keys_are_order_sensitive_and_stable() {
        assert_ne!(derive_seed(&[1, 2]), derive_seed(&[2, 1]));
        assert_ne!(derive_seed(&[0]), derive_seed(&[0, 0]));
        let a: u64 = stream(&[7, 3]).random();
        let b: u64 = stream(&[7, 3]).random();
        assert_eq!(a, b);
    }
}
