//! Lookup table of ε-quantiles of the per-edge lower-bound distribution
//! `N(x·√(2L ln m), v − L·x²/(L+1))`, over a variance × threshold grid.
//!
//! Both grid axes round in the conservative direction: variances round up
//! (a wider distribution has a smaller ε-quantile when ε < 0.5) and
//! thresholds round down (the quantile is increasing in `x`). Stored values
//! are additionally rounded down to the nearest f32.

use alloc::vec;
use alloc::vec::Vec;

use super::quantize::VarianceGrid;
use crate::error::{invalid, Result};
use crate::normal;

pub const DEFAULT_COLUMNS: usize = 512;

#[derive(Clone, Debug, PartialEq)]
pub struct QuantileTable {
    eps: f64,
    parts: usize,
    m: usize,
    grid: VarianceGrid,
    columns: usize,
    /// `[row][col]`, `VarianceGrid::ROWS + 1` rows; the overflow row is −∞.
    values: Vec<f32>,
}

impl QuantileTable {
    pub fn build(eps: f64, parts: usize, m: usize, columns: usize) -> Result<Self> {
        if !(eps > 0.0 && eps <= 0.5) {
            return invalid(alloc::format!("epsilon {eps} outside (0, 0.5]"));
        }
        if parts == 0 || m < 2 || columns == 0 {
            return invalid("quantile table needs L >= 1, m >= 2 and a nonempty grid");
        }
        let grid = VarianceGrid::for_partitions(parts);
        let z = normal::inverse_cdf(eps);
        let scale = libm::sqrt(2.0 * parts as f64 * libm::log(m as f64));
        let shrink = parts as f64 / (parts as f64 + 1.0);
        let rows = VarianceGrid::ROWS;
        let mut values = vec![f32::NEG_INFINITY; (rows + 1) * columns];
        for row in 0..rows {
            let v = grid.value(row);
            for col in 0..columns {
                let x = col as f64 / columns as f64;
                let exact = x * scale + libm::sqrt((v - shrink * x * x).max(0.0)) * z;
                values[row * columns + col] = round_down_f32(exact);
            }
        }
        Ok(Self { eps, parts, m, grid, columns, values })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn parts(&self) -> usize {
        self.parts
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn grid(&self) -> VarianceGrid {
        self.grid
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn x_at(&self, col: usize) -> f64 {
        col as f64 / self.columns as f64
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.columns + col]
    }

    /// Threshold for a variance row and a cosine bound `ar` in `(0, 1)`.
    #[inline]
    pub fn lookup(&self, row: u8, ar: f32) -> f32 {
        let col = ((ar * self.columns as f32) as usize).min(self.columns - 1);
        self.values[row as usize * self.columns + col]
    }
}

/// The exact quantile the table approximates, for variance `v` and threshold `x`.
pub fn exact_quantile(eps: f64, parts: usize, m: usize, v: f64, x: f64) -> f64 {
    let l = parts as f64;
    x * libm::sqrt(2.0 * l * libm::log(m as f64)) + libm::sqrt((v - l * x * x / (l + 1.0)).max(0.0)) * normal::inverse_cdf(eps)
}

fn round_down_f32(x: f64) -> f32 {
    let f = x as f32;
    if f as f64 > x {
        f.next_down()
    } else {
        f
    }
}
