//! Regular/residual split of a residual edge vector, and the isotropic
//! partition statistics used to pick `L`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::rng::{stream, SeededStream};

/// `e = ‖e‖·w_reg·reg_dir + res`, with `reg_dir` the unit vector whose
/// blocks are the block directions of `e`, each scaled by `1/√L`.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub w_reg: f64,
    pub w_res: f64,
    pub reg_dir: Vec<f64>,
    pub res: Vec<f64>,
    pub norm: f64,
}

/// Splits `e` into its regular part (aligned with the block-normalized
/// direction) and the orthogonal residual part. An all-zero block contributes
/// a zero direction block; the remaining blocks are renormalized.
pub fn decompose(e: &[f32], parts: usize) -> Result<Decomposition> {
    let d = e.len();
    if parts == 0 || d == 0 || d % parts != 0 {
        return invalid(alloc::format!("dimension {d} is not divisible by L={parts}"));
    }
    let width = d / parts;
    let block_norms: Vec<f64> = e
        .chunks_exact(width)
        .map(|b| libm::sqrt(b.iter().map(|&x| x as f64 * x as f64).sum::<f64>()))
        .collect();
    let norm = libm::sqrt(block_norms.iter().map(|n| n * n).sum::<f64>());
    if norm == 0.0 {
        return Err(Error::Degenerate("zero residual vector"));
    }
    let e64: Vec<f64> = e.iter().map(|&x| x as f64).collect();
    if parts == 1 {
        return Ok(Decomposition {
            w_reg: 1.0,
            w_res: 0.0,
            reg_dir: e64.iter().map(|x| x / norm).collect(),
            res: vec![0.0; d],
            norm,
        });
    }
    let live = block_norms.iter().filter(|&&n| n > 0.0).count() as f64;
    let scale = 1.0 / libm::sqrt(live);
    let mut reg_dir = vec![0.0f64; d];
    for (i, &bn) in block_norms.iter().enumerate() {
        if bn > 0.0 {
            for k in i * width..(i + 1) * width {
                reg_dir[k] = e64[k] / bn * scale;
            }
        }
    }
    let proj: f64 = block_norms.iter().sum::<f64>() * scale;
    let res: Vec<f64> = e64.iter().zip(&reg_dir).map(|(x, r)| x - proj * r).collect();
    let w_reg = (proj / norm).min(1.0);
    let w_res = libm::sqrt((1.0 - w_reg * w_reg).max(0.0));
    Ok(Decomposition { w_reg, w_res, reg_dir, res, norm })
}

/// Closed-form lower bound on the isotropic mean of `w_reg`, valid for
/// `d/L > 3`.
pub fn w_reg_lower_bound(dim: usize, parts: usize) -> f64 {
    let d = dim as f64;
    let l = parts as f64;
    let dp = d / l;
    (dp - 1.0) * libm::sqrt(2.0 * l * d - 3.0 * l) / ((d - 1.0) * libm::sqrt(2.0 * dp + 2.0 * libm::sqrt(3.0) - 6.0))
}

/// Monte-Carlo moments of the decomposition weights over isotropic vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionStats {
    pub mean_w_reg: f64,
    pub mean_w_res: f64,
    pub mean_w_res_sq: f64,
    /// `(1 + (L−1)·E[w_res²]) / L`.
    pub j_rel: f64,
    /// `1 / L`.
    pub j_opt: f64,
    /// `|E[w_res] − 1/(L+1)|`.
    pub delta: f64,
}

pub fn estimate_partition_stats(dim: usize, parts: usize, samples: usize, seed: u64) -> Result<PartitionStats> {
    if samples == 0 {
        return invalid("at least one sample is required");
    }
    if parts == 0 || dim % parts != 0 {
        return invalid(alloc::format!("dimension {dim} is not divisible by L={parts}"));
    }
    let mut rng = SeededStream::new(seed, stream::MONTE_CARLO);
    let mut e = vec![0.0f32; dim];
    let (mut s_reg, mut s_res, mut s_res2) = (0.0, 0.0, 0.0);
    let mut taken = 0usize;
    while taken < samples {
        rng.fill_gaussian(&mut e);
        let Ok(dec) = decompose(&e, parts) else { continue };
        s_reg += dec.w_reg;
        s_res += dec.w_res;
        s_res2 += dec.w_res * dec.w_res;
        taken += 1;
    }
    let n = samples as f64;
    let l = parts as f64;
    let mean_w_res_sq = s_res2 / n;
    Ok(PartitionStats {
        mean_w_reg: s_reg / n,
        mean_w_res: s_res / n,
        mean_w_res_sq,
        j_rel: (1.0 + (l - 1.0) * mean_w_res_sq) / l,
        j_opt: 1.0 / l,
        delta: (s_res / n - 1.0 / (l + 1.0)).abs(),
    })
}
