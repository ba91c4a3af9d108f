//! Per-stage seed derivation from a single master seed.
//!
//! `derive(master, stage, index)` hashes the stage name with FNV-1a, mixes it
//! with the master seed and the index through SplitMix64, and is what every
//! simulation stage uses to seed its own ChaCha8 generator. Frames therefore
//! get independent streams no matter in which order they are produced.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn derive(master: u64, stage: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ fnv1a(stage)).wrapping_add(index))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stages_and_indices_get_distinct_seeds() {
        let a = derive(7, "field", 0);
        assert_eq!(a, derive(7, "field", 0));
        assert_ne!(a, derive(7, "field", 1));
        assert_ne!(a, derive(7, "channel", 0));
        assert_ne!(a, derive(8, "field", 0));
    }
}
