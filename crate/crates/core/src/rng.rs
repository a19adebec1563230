//! Seeded random streams.
//!
//! Every random draw in the crate goes through [`SeededRng`], so outputs are a
//! pure function of the seed. The algorithm is fixed:
//!
//! * generator: ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`), keyed by
//!   `SeedableRng::seed_from_u64(seed)`;
//! * uniform `[0, 1)`: the top 53 bits of one `u64` draw, times `2^-53`;
//! * standard normal: the ziggurat sampler of `rand_distr::StandardNormal`;
//! * integer in `[0, n)`: Lemire's widening multiply, as done by `rand`.
//!
//! Sub-seeds are derived with [`derive_seed`], a SplitMix64 finalizer over the
//! parent seed, a domain tag, and an index.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for o in out {
            *o = self.inner.sample(StandardNormal);
        }
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// `count` distinct indices from `0..n`, via a partial Fisher–Yates shuffle.
    pub fn sample_indices(&mut self, n: usize, count: usize) -> Vec<usize> {
        let mut pool: Vec<usize> = (0..n).collect();
        let count = count.min(n);
        for i in 0..count {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Domain tags keep sub-streams for different purposes apart.
pub mod tag {
    pub const EXTRACTOR: u64 = 1;
    pub const RETRAIN: u64 = 2;
    pub const MEMORY: u64 = 3;
    pub const CELL: u64 = 4;
    pub const DATA: u64 = 5;
}

pub fn derive_seed(parent: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(parent) ^ tag) ^ index)
}
