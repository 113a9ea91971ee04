//! Seeded random stream shared by rate coding, weight init and shuffling.
//!
//! The generator is ChaCha8 (`rand_chacha`), whose output is specified
//! independently of platform and word size, so a seed names one stream
//! everywhere.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Name of the pinned generator algorithm.
pub const RNG_ALGORITHM: &str = "ChaCha8";

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    /// Independent generator for a named sub-purpose (init, shuffling, ...).
    ///
    /// Derived from the root seed only, so it does not depend on how much of
    /// this stream has been consumed.
    pub fn derive(&self, stream: u64) -> SeededRng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream);
        SeededRng {
            seed: self.seed,
            inner,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.gen()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform draw in `[-bound, bound]`.
    pub fn symmetric(&mut self, bound: f64) -> f64 {
        (2.0 * self.unit() - 1.0) * bound
    }

    /// Bernoulli trial with success probability `p` (clamped to `[0, 1]`).
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_seeds_give_equal_streams() {
        let mut a = SeededRng::new(7);
        let mut b = SeededRng::new(7);
        for _ in 0..10_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn stream_is_pinned() {
        // First outputs of ChaCha8 seeded with 0 via seed_from_u64; guards
        // against a silent generator swap.
        let mut r = SeededRng::new(0);
        let first: Vec<u64> = (0..2).map(|_| r.next_u64()).collect();
        assert_eq!(first, vec![13080132717333068652, 8594738769458413623]);
        assert_eq!(r.algorithm(), "ChaCha8");
    }

    #[test]
    fn derived_streams_differ_and_repeat() {
        let root = SeededRng::new(3);
        let mut a = root.derive(1);
        let mut b = root.derive(2);
        let mut a2 = SeededRng::new(3).derive(1);
        let xa = a.next_u64();
        assert_ne!(xa, b.next_u64());
        assert_eq!(xa, a2.next_u64());
    }

    #[test]
    fn bernoulli_extremes() {
        let mut r = SeededRng::new(1);
        assert!((0..1000).all(|_| !r.bernoulli(0.0)));
        assert!((0..1000).all(|_| r.bernoulli(1.0)));
    }
}
