//! Counter-based seed derivation.
//!
//! Every random stream in the pipeline is keyed by `(master_seed, tag, index...)`
//! so that results do not depend on evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_tag(tag: &str) -> u64 {
    // FNV-1a
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derives a child seed from a parent seed, a stream tag and a list of indices.
pub fn derive_seed(parent: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix64(parent ^ hash_tag(tag));
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

/// A reproducible generator for the given derived seed.
pub fn rng_for(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_stable_and_separates_streams() {
        let a = derive_seed(7, "noise", &[1, 2]);
        assert_eq!(a, derive_seed(7, "noise", &[1, 2]));
        assert_ne!(a, derive_seed(7, "noise", &[2, 1]));
        assert_ne!(a, derive_seed(7, "kernel", &[1, 2]));
        assert_ne!(a, derive_seed(8, "noise", &[1, 2]));
        let x: f64 = rng_for(a).random();
        let y: f64 = rng_for(a).random();
        assert_eq!(x.to_bits(), y.to_bits());
    }
}
