//! Routing tests that decide whether a neighbor's exact distance is worth
//! computing.
//!
//! Each test estimates the angle between the query and the residual edge
//! vector `e = u − v` and compares it with the cosine `A_r(e)` that `u` must
//! exceed to enter the result list. Under the test's distributional model a
//! neighbor that truly improves the result list passes with probability at
//! least `1 − ε`.

mod decompose;
mod meta;
mod peos;
mod quantile;
mod quantize;
mod simhash;

use core::fmt;
use core::str::FromStr;

pub use decompose::{decompose, estimate_partition_stats, w_reg_lower_bound, Decomposition, PartitionStats};
pub use meta::{build_edge_meta, edge_geometry, EdgeGeometry, EdgeMeta, MetaLayout, MetaQuantizers};
pub use peos::{batch_peos_test, peos_test, rceos_test, PeosEvaluator, TestCounts, TestOutcome};
pub use quantile::{exact_quantile, QuantileTable, DEFAULT_COLUMNS};
pub use quantize::{decode_weight, encode_weight, NormQuantizer, Rounding, VarianceGrid};
pub use simhash::{
    required_m_rceos, simhash_sketch, simhash_test, simhash_threshold, SimHashEnsemble, SimHashEvaluator, SimHashMeta, SimHashSketch,
};

use crate::error::{invalid, Error, Result};
use crate::projections::MAX_PROJECTIONS;
use crate::vecstore::Metric;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum RoutingMode {
    Peos,
    Rceos,
    SimHash,
    /// Every neighbor passes; plain graph search.
    None,
}

impl RoutingMode {
    pub fn name(self) -> &'static str {
        match self {
            RoutingMode::Peos => "peos",
            RoutingMode::Rceos => "rceos",
            RoutingMode::SimHash => "simhash",
            RoutingMode::None => "none",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            RoutingMode::None => 0,
            RoutingMode::Peos => 1,
            RoutingMode::Rceos => 2,
            RoutingMode::SimHash => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => RoutingMode::None,
            1 => RoutingMode::Peos,
            2 => RoutingMode::Rceos,
            3 => RoutingMode::SimHash,
            _ => return None,
        })
    }
}

impl fmt::Display for RoutingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RoutingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "peos" => Ok(RoutingMode::Peos),
            "rceos" => Ok(RoutingMode::Rceos),
            "simhash" => Ok(RoutingMode::SimHash),
            "none" => Ok(RoutingMode::None),
            other => invalid(alloc::format!("unknown routing mode `{other}`")),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RoutingConfig {
    pub mode: RoutingMode,
    pub eps: f64,
    /// Number of subspaces `L`.
    pub parts: usize,
    /// Projection vectors per subspace.
    pub m: usize,
    /// Weights forced to `(1, 0)`, no residual id, one-byte norms.
    pub compact: bool,
    pub simhash_bits: usize,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self { mode: RoutingMode::Peos, eps: 0.2, parts: 8, m: 128, compact: false, simhash_bits: 64 }
    }
}

impl RoutingConfig {
    pub fn none() -> Self {
        Self { mode: RoutingMode::None, ..Self::default() }
    }

    pub fn peos(eps: f64, parts: usize, m: usize) -> Self {
        Self { mode: RoutingMode::Peos, eps, parts, m, ..Self::default() }
    }

    pub fn rceos(eps: f64, m: usize) -> Self {
        Self { mode: RoutingMode::Rceos, eps, parts: 1, m, ..Self::default() }
    }

    pub fn simhash(eps: f64, bits: usize) -> Self {
        Self { mode: RoutingMode::SimHash, eps, simhash_bits: bits, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            RoutingMode::None => Ok(()),
            RoutingMode::SimHash => {
                if !(self.eps > 0.0 && self.eps < 1.0) {
                    return invalid(alloc::format!("epsilon {} outside (0, 1)", self.eps));
                }
                if self.simhash_bits == 0 || self.simhash_bits > 4096 {
                    return invalid("simhash bits must be in 1..=4096");
                }
                if self.compact {
                    return invalid("compact mode applies to PEOs only");
                }
                Ok(())
            }
            RoutingMode::Peos | RoutingMode::Rceos => {
                if !(self.eps > 0.0 && self.eps <= 0.5) {
                    return invalid(alloc::format!("epsilon {} outside (0, 0.5]", self.eps));
                }
                if !(2..=MAX_PROJECTIONS).contains(&self.m) {
                    return invalid(alloc::format!("m={} outside 2..={MAX_PROJECTIONS}", self.m));
                }
                if self.parts == 0 {
                    return invalid("L must be at least 1");
                }
                if self.mode == RoutingMode::Rceos && self.parts != 1 {
                    return invalid("RCEOs requires L = 1");
                }
                if self.compact && (self.mode != RoutingMode::Peos || !(2..=4).contains(&self.parts)) {
                    return invalid("compact mode requires PEOs with 2 <= L <= 4");
                }
                Ok(())
            }
        }
    }

    /// Packed metadata layout this configuration needs, `None` for plain search.
    pub fn layout(&self) -> Option<MetaLayout> {
        match self.mode {
            RoutingMode::None => None,
            RoutingMode::SimHash => Some(MetaLayout::SimHash { bits: self.simhash_bits }),
            RoutingMode::Peos | RoutingMode::Rceos => Some(MetaLayout::Peos { parts: self.parts, compact: self.compact }),
        }
    }
}

/// Query-side state the tests read: the pruning scalar `r` derived from the
/// furthest element `p` of a full result list, and `vᵀq` of the node being
/// expanded.
///
/// For L2, `r = ‖p‖²/2 − pᵀq`, so `δ² − 2r = ‖q‖²`. For angular and inner
/// product, `r = −pᵀq`. `r = +∞` while the result list is not full.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ThresholdState {
    pub r: f32,
    pub delta: f32,
    pub vq: f32,
    qnorm: f32,
    metric: Metric,
}

impl ThresholdState {
    /// `qnorm` is the norm of the query vector the inner products are taken
    /// with (1 for angular, whose queries are normalized).
    pub fn new(metric: Metric, qnorm: f32) -> Self {
        Self { r: f32::INFINITY, delta: f32::INFINITY, vq: 0.0, qnorm, metric }
    }

    pub fn is_bounded(&self) -> bool {
        self.r.is_finite()
    }

    pub fn qnorm(&self) -> f32 {
        self.qnorm
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// Bound from the distance `δ` of the furthest result.
    pub fn set_delta(&mut self, delta: f32) {
        self.delta = delta;
        self.r = match self.metric {
            Metric::L2 => 0.5 * (delta * delta - self.qnorm * self.qnorm),
            Metric::Angular => delta - 1.0,
            Metric::Ip => delta,
        };
    }

    /// Bound from the index-internal score of the furthest result (squared
    /// distance for L2).
    pub(crate) fn set_score(&mut self, score: f32) {
        match self.metric {
            Metric::L2 => {
                self.delta = libm::sqrtf(score.max(0.0));
                self.r = 0.5 * (score - self.qnorm * self.qnorm);
            }
            _ => self.set_delta(score),
        }
    }

    pub fn clear(&mut self) {
        self.r = f32::INFINITY;
        self.delta = f32::INFINITY;
    }

    /// `A_r(e)` from the dequantized `‖u‖²/2` and `‖e‖`. L2 uses
    /// `(‖u‖²/2 − r − vᵀq) / (‖q‖‖e‖)`; angular and inner product drop the
    /// norm term, giving `(pᵀq − vᵀq) / (‖q‖‖e‖)`.
    #[inline]
    pub fn ar(&self, half_u_sq: f32, enorm: f32) -> f32 {
        if !self.r.is_finite() {
            return f32::NEG_INFINITY;
        }
        let num = match self.metric {
            Metric::L2 => half_u_sq - self.r - self.vq,
            _ => -self.r - self.vq,
        };
        num / (self.qnorm * enorm)
    }
}

/// `A_r` of a decoded edge record.
pub fn compute_ar(meta: &EdgeMeta, ts: &ThresholdState, quant: &MetaQuantizers) -> f32 {
    ts.ar(quant.half_u_sq(meta.half_u_sq_q as u32), quant.enorm(meta.enorm_q as u32))
}
