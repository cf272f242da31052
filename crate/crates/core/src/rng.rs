//! Counter-based random numbers.
//!
//! Every random decision is a pure function of `(seed, key)`, so a site's
//! status does not depend on the order in which sites are visited, replicas
//! can be generated independently and merged, and lazy and eager samplers
//! see the same uniforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
pub fn hash2(seed: u64, a: u64) -> u64 {
    mix64(mix64(seed.wrapping_add(GOLDEN)) ^ a.wrapping_mul(GOLDEN))
}

#[inline]
pub fn hash3(seed: u64, a: u64, b: u64) -> u64 {
    hash2(hash2(seed, a), b)
}

/// Uniform in `[0, 1)` with 53 random bits.
#[inline]
pub fn to_unit(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
pub fn unit2(seed: u64, a: u64) -> f64 {
    to_unit(hash2(seed, a))
}

#[inline]
pub fn unit3(seed: u64, a: u64, b: u64) -> f64 {
    to_unit(hash3(seed, a, b))
}

/// Seed of the `index`-th independent sample derived from a run seed.
#[inline]
pub fn sample_seed(seed: u64, index: u64) -> u64 {
    hash2(seed ^ 0x5151_5151_5151_5151, index)
}

/// A sequential stream for samplers that need many draws (Gaussian
/// increments, Markov chains). Streams with different `stream` ids are
/// independent.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(hash2(seed, stream))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_is_in_range_and_deterministic() {
        for i in 0..10_000u64 {
            let u = unit2(7, i);
            assert!((0.0..1.0).contains(&u));
            assert_eq!(u, unit2(7, i));
        }
        assert_ne!(unit2(7, 1), unit2(8, 1));
    }

    #[test]
    fn mean_of_uniforms() {
        let n = 200_000u64;
        let mean = (0..n).map(|i| unit3(1, i, 3)).sum::<f64>() / n as f64;
        // sd of the mean is 1/sqrt(12 n) ~ 6.5e-4
        assert!((mean - 0.5).abs() < 4.0 * (1.0 / (12.0 * n as f64)).sqrt());
    }
}
