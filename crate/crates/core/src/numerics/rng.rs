//! Seedable random streams with a (seed, position) reproducibility contract.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A single-owner pseudo-random stream.
///
/// Two streams with the same seed that have made the same number of draws
/// produce identical next draws; `position` counts `u64` draws. Concurrent
/// users fork child streams with [`RngStream::fork`] instead of sharing one.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    position: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { seed, position: 0, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Stream positioned as if `position` draws had already been made.
    pub fn at(seed: u64, position: u64) -> Self {
        let mut s = RngStream::new(seed);
        for _ in 0..position {
            s.next_u64();
        }
        s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    /// Child stream keyed by `index`; children with distinct indices are
    /// independent streams (SplitMix64 finalizer over seed and index).
    pub fn fork(&self, index: u64) -> RngStream {
        let mut z = self
            .seed
            .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        RngStream::new(z ^ (z >> 31))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.position += 1;
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`; one draw.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`; one draw.
    fn next_f64_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)`; one draw.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        self.next_u64() % bound
    }

    /// One `N(0, stddev^2)` draw by Box-Muller; consumes exactly two draws so
    /// positions stay reproducible.
    pub fn next_gaussian(&mut self, stddev: f64) -> f64 {
        let u1 = self.next_f64_open();
        let u2 = self.next_f64();
        stddev * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// `n` i.i.d. draws from `N(0, stddev^2)`.
    pub fn gaussian(&mut self, n: usize, stddev: f64) -> Result<Vec<f64>> {
        if stddev < 0.0 {
            return Err(Error::InvalidInput(format!("stddev must be nonnegative, got {stddev}")));
        }
        if stddev == 0.0 {
            return Ok(vec![0.0; n]);
        }
        Ok((0..n).map(|_| self.next_gaussian(stddev)).collect())
    }

    /// Fisher-Yates shuffle, deterministic for a given stream state.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_position_same_draw() {
        let mut a = RngStream::new(17);
        for _ in 0..100 {
            a.next_u64();
        }
        let mut b = RngStream::at(17, a.position());
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn gaussian_zero_stddev_is_all_zeros() {
        let mut rng = RngStream::new(1);
        assert_eq!(rng.gaussian(5, 0.0).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn gaussian_rejects_negative_stddev() {
        let mut rng = RngStream::new(1);
        assert!(rng.gaussian(5, -0.1).is_err());
    }

    #[test]
    fn gaussian_is_reproducible() {
        let a = RngStream::new(9).gaussian(5, 1.0).unwrap();
        let b = RngStream::new(9).gaussian(5, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forks_differ_from_parent_and_each_other() {
        let parent = RngStream::new(3);
        let mut c0 = parent.fork(0);
        let mut c1 = parent.fork(1);
        let mut p = RngStream::new(3);
        let draws = [c0.next_u64(), c1.next_u64(), p.next_u64()];
        assert_ne!(draws[0], draws[1]);
        assert_ne!(draws[0], draws[2]);
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = RngStream::new(7);
        let mut v: Vec<usize> = (0..10).collect();
        rng.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
    }
}
