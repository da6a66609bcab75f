//! Per-path random number streams.
//!
//! Each path gets its own ChaCha8 stream: the key is derived from the run seed
//! and the 64-bit stream id is the path index, so the draws of path `k` do not
//! depend on which other paths run, in what order, or on how many threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};

/// Salts for derived streams that must not overlap the primary path stream.
pub mod salt {
    pub const PRIMARY: u64 = 0;
    pub const CHAIN: u64 = 0x6a09_e667_f3bc_c908;
}

#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    seed: u64,
    path_index: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl NoiseStream {
    pub fn new(seed: u64, path_index: u64) -> Self {
        Self::salted(seed, path_index, salt::PRIMARY)
    }

    /// A stream for `(seed, path_index)` that is independent of the primary
    /// one whenever `salt` differs.
    pub fn salted(seed: u64, path_index: u64, salt: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ salt));
        rng.set_stream(path_index);
        Self {
            rng,
            seed,
            path_index,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    pub fn gaussian(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn exponential(&mut self, rate: f64) -> f64 {
        let e: f64 = Exp1.sample(&mut self.rng);
        e / rate
    }

    pub fn poisson(&mut self, law: &Poisson<f64>) -> u64 {
        law.sample(&mut self.rng) as u64
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}
