//! Seeded, splittable random number generation.
//!
//! Nothing in the crate touches a global RNG. Every stochastic operation takes
//! a [`SplitRng`] explicitly, and independent streams are derived with
//! [`SplitRng::derive`] so that results do not depend on evaluation order or
//! on how work is spread over threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct SplitRng {
    seed: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SplitRng {
    pub fn new(seed: u64) -> Self {
        SplitRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream keyed by `tag`. Depends only on this generator's seed and
    /// the tag, never on how many values have been drawn so far.
    pub fn derive(&self, tag: u64) -> SplitRng {
        SplitRng::new(splitmix64(self.seed ^ splitmix64(tag.wrapping_add(1))))
    }

    /// Advances this stream and returns a fresh independent generator.
    pub fn split(&mut self) -> SplitRng {
        SplitRng::new(splitmix64(self.inner.next_u64()))
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw (Box-Muller).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.inner.gen_range(0..=i);
            idx.swap(i, j);
        }
        idx
    }
}
