//! Seeded pseudo-random numbers with a fully specified algorithm.
//!
//! Every random decision in the toolkit (shuffles, rotations, weight
//! initialization, undersampling, GA choices) draws from [`SeededRng`], so a
//! run is reproducible from its seed alone. The stream is ChaCha8 seeded via
//! `seed_from_u64`; the derived draws below are defined here rather than
//! delegated to a generic sampling library so other implementations can
//! reproduce them:
//!
//! * `below(n)`: rejection sampling on `next_u64`, rejecting values at or
//!   above the largest multiple of `n`, then `x % n`.
//! * `unit()`: `(next_u64 >> 11) * 2^-53`, uniform in `[0, 1)`.
//! * `normal()`: Box-Muller cosine branch with `u1 = 1 - unit()`, one draw
//!   pair per sample (the sine branch is discarded).
//! * `shuffle`: Fisher-Yates from the last index down, `j = below(i + 1)`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream for the same seed, used to give each sub-task
    /// (one crossover, one image) its own generator.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SeededRng { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let bound = n as u64;
        let limit = u64::MAX - u64::MAX % bound;
        loop {
            let x = self.next_u64();
            if x < limit {
                return (x % bound) as usize;
            }
        }
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
