//! Seeding conventions.
//!
//! All randomness comes from ChaCha8. Independent work item `i` under a base
//! seed `s` draws from stream `i` of the generator keyed by `s`, so results do
//! not depend on how work is scheduled across threads and distinct seeds never
//! share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for work item `index` under `base_seed`.
pub fn stream(base_seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

/// Derives a sub-seed for a named purpose so that different consumers of one
/// user seed (noise draws, pool shuffles, ...) do not share streams.
pub fn derive(base_seed: u64, salt: &str) -> u64 {
    // splitmix64 over the salt bytes
    let mut h = base_seed ^ 0x9E37_79B9_7F4A_7C15;
    for b in salt.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn streams_are_reproducible() {
        let a: Vec<u64> = (0..4).map(|_| stream(7, 3).random()).collect();
        let b: Vec<u64> = (0..4).map(|_| stream(7, 3).random()).collect();
        assert_eq!(a, b);
        let c: u64 = stream(7, 4).random();
        assert_ne!(a[0], c);
        // xor-style seeding would make these coincide
        let d: u64 = stream(2, 0).random();
        let e: u64 = stream(3, 1).random();
        assert_ne!(d, e);
    }

    #[test]
    fn derived_seeds_differ_by_salt() {
        assert_ne!(derive(1, "noise"), derive(1, "pool"));
        assert_eq!(derive(1, "noise"), derive(1, "noise"));
    }
}
