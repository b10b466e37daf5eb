//! Seed derivation and the crate-wide random generator.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`], a counter-based
//! stream cipher generator, seeded with a 64-bit value. Independent streams are
//! obtained by hashing a base seed together with a list of integer labels:
//!
//! ```text
//! derive_seed(base, [a, b, c]) = mix(mix(mix(mix(base) ^ a) ^ b) ^ c)
//! ```
//!
//! where `mix` is the SplitMix64 finalizer applied after adding the golden-ratio
//! increment. A trial seed therefore depends only on its labels, never on the
//! order in which trials are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type LabRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes `base` together with `labels` into a new seed.
pub fn derive_seed(base: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(base), |acc, &label| splitmix64(acc ^ label))
}

/// FNV-1a hash of a string label, for mixing names into [`derive_seed`].
pub fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn rng_from_seed(seed: u64) -> LabRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream labels used when a single seed drives several independent draws.
pub(crate) mod stream {
    pub const RADII: u64 = 1;
    pub const ANGLES: u64 = 2;
    pub const SPHERE: u64 = 3;
    pub const POWER_START: u64 = 4;
    pub const OCCUPANCY: u64 = 5;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_seeds_depend_on_every_label() {
        let a = derive_seed(7, &[1, 2, 3]);
        assert_eq!(a, derive_seed(7, &[1, 2, 3]));
        assert_ne!(a, derive_seed(7, &[1, 2, 4]));
        assert_ne!(a, derive_seed(8, &[1, 2, 3]));
        assert_ne!(a, derive_seed(7, &[2, 1, 3]));
    }

    #[test]
    fn same_seed_same_stream() {
        let xs: Vec<u64> = (0..8).map(|_| rng_from_seed(99).gen()).collect();
        let mut r1 = rng_from_seed(99);
        let mut r2 = rng_from_seed(99);
        for _ in 0..100 {
            assert_eq!(r1.gen::<u64>(), r2.gen::<u64>());
        }
        assert!(xs.iter().all(|&x| x == xs[0]));
    }

    #[test]
    fn label_hash_is_stable() {
        assert_eq!(label_hash(""), 0xCBF2_9CE4_8422_2325);
        assert_ne!(label_hash("a"), label_hash("b"));
    }
}
