//! Synthetic isotropic Gaussian workloads.

use peos_core::rng::{stream, SeededStream};
use peos_core::Dataset;

use crate::error::Result;

pub const DEFAULT_N: usize = 50_000;
pub const DEFAULT_NQ: usize = 100;
pub const DEFAULT_DIM: usize = 128;

/// `n` i.i.d. `N(0, I_dim)` points drawn from `(seed, stream)`.
pub fn gaussian(n: usize, dim: usize, seed: u64, stream: u64) -> Result<Dataset> {
    let mut s = SeededStream::new(seed, stream);
    let mut data = vec![0.0f32; n * dim];
    s.fill_gaussian(&mut data);
    Ok(Dataset::new(dim, data)?)
}

/// Base set and query set of one seed, on independent streams.
pub fn gaussian_workload(n: usize, nq: usize, dim: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    Ok((gaussian(n, dim, seed, stream::DATA)?, gaussian(nq, dim, seed, stream::QUERIES)?))
}
