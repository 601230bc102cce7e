//! Seeded random streams.
//!
//! Every random quantity in an index is regenerated from `(seed, stream)`
//! instead of being stored, so the generator and the Gaussian transform are
//! part of the on-disk contract. [`RNG_ID`] names the combination recorded in
//! index headers: ChaCha8 with a 64-bit seed and a 64-bit stream selector,
//! 53-bit uniforms on the open interval (0, 1), and Gaussians by AS241
//! inverse CDF.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::normal;

/// Identifier of the generator described in the module docs.
pub const RNG_ID: u32 = 1;

/// Stream selectors. Distinct streams of the same seed are independent.
pub mod stream {
    pub const SUB_PROJECTIONS: u64 = 1;
    pub const FULL_PROJECTIONS: u64 = 2;
    pub const SIMHASH: u64 = 3;
    pub const LEVELS: u64 = 4;
    pub const DATA: u64 = 5;
    pub const QUERIES: u64 = 6;
    pub const MONTE_CARLO: u64 = 7;
}

#[derive(Clone, Debug)]
pub struct SeededStream {
    rng: ChaCha8Rng,
}

impl SeededStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on (0, 1); never returns either endpoint.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn gaussian(&mut self) -> f64 {
        normal::inverse_cdf(self.uniform())
    }

    pub fn fill_gaussian(&mut self, out: &mut [f32]) {
        for x in out {
            *x = self.gaussian() as f32;
        }
    }

    /// Uniform integer in `0..n` by rejection.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let x = self.rng.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }
}
