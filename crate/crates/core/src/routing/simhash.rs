//! SimHash routing: random-hyperplane sketches of edge residuals compared
//! with the query sketch against a Hoeffding threshold.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::meta::{MetaLayout, MetaQuantizers};
use super::peos::TestOutcome;
use super::ThresholdState;
use crate::error::{invalid, Error, Result};
use crate::kernels;
use crate::rng::{stream, SeededStream};

/// `n` Gaussian hyperplanes in `R^d`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SimHashEnsemble {
    dim: usize,
    bits: usize,
    seed: u64,
    planes: Vec<f32>,
}

impl SimHashEnsemble {
    pub fn generate(seed: u64, dim: usize, bits: usize) -> Result<Self> {
        if dim == 0 {
            return invalid("dimension must be positive");
        }
        let mut rng = SeededStream::new(seed, stream::SIMHASH);
        let mut planes = vec![0.0f32; dim * bits];
        rng.fill_gaussian(&mut planes);
        Ok(Self { dim, bits, seed, planes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn plane(&self, i: usize) -> &[f32] {
        &self.planes[i * self.dim..(i + 1) * self.dim]
    }
}

/// `n`-bit sign signature; bit `i` is set when `xᵀa_i < 0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SimHashSketch {
    bits: usize,
    words: Vec<u64>,
}

impl SimHashSketch {
    pub fn new(x: &[f32], ens: &SimHashEnsemble) -> Result<Self> {
        if x.len() != ens.dim {
            return Err(Error::DimensionMismatch { expected: ens.dim, got: x.len() });
        }
        let mut words = vec![0u64; ens.bits.div_ceil(64)];
        for i in 0..ens.bits {
            if kernels::dot(x, ens.plane(i)) < 0.0 {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Ok(Self { bits: ens.bits, words })
    }

    pub fn from_bytes(bytes: &[u8], bits: usize) -> Self {
        let mut words = vec![0u64; bits.div_ceil(64)];
        for (k, &b) in bytes.iter().enumerate().take(bits.div_ceil(8)) {
            words[k / 8] |= (b as u64) << (8 * (k % 8));
        }
        Self { bits, words }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        (0..self.bits.div_ceil(8)).map(|k| (self.words[k / 8] >> (8 * (k % 8))) as u8).collect()
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn bit(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn xor(&self, other: &Self) -> Self {
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect();
        Self { bits: self.bits, words }
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Number of agreeing bits.
    pub fn collisions(&self, other: &Self) -> u32 {
        self.bits as u32 - self.xor(other).count_ones()
    }
}

pub fn simhash_sketch(e: &[f32], ens: &SimHashEnsemble) -> Result<SimHashSketch> {
    SimHashSketch::new(e, ens)
}

/// `n(1 − θ̃/π) − √(n ln(1/ε) / 2)` with `θ̃ = arccos(A_r)`, `A_r` clamped
/// to `[−1, 1]`.
pub fn simhash_threshold(n: usize, ar: f64, eps: f64) -> f64 {
    let theta = libm::acos(ar.clamp(-1.0, 1.0));
    let n = n as f64;
    n * (1.0 - theta / PI) - libm::sqrt(n * libm::log(1.0 / eps) / 2.0)
}

pub fn simhash_test(collisions: u32, n: usize, ar: f32, eps: f64) -> TestOutcome {
    if ar >= 1.0 {
        TestOutcome::EarlyFail
    } else if ar <= 0.0 {
        TestOutcome::EarlyPass
    } else if collisions as f64 >= simhash_threshold(n, ar as f64, eps) {
        TestOutcome::Pass
    } else {
        TestOutcome::Fail
    }
}

/// Decoded SimHash edge record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimHashMeta {
    pub sketch: SimHashSketch,
    pub half_u_sq_q: u16,
    /// Zero marks a degenerate edge.
    pub enorm_q: u16,
}

impl SimHashMeta {
    pub fn build(u: &[f32], v: &[f32], ens: &SimHashEnsemble, quant: &MetaQuantizers) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::DimensionMismatch { expected: v.len(), got: u.len() });
        }
        let e: Vec<f32> = u.iter().zip(v).map(|(a, b)| a - b).collect();
        let enorm = kernels::norm(&e);
        let half_u = quant.half_u.encode(0.5 * kernels::norm_sq(u), super::quantize::Rounding::Down) as u16;
        let enorm_q = if enorm > 0.0 {
            (quant.enorm.encode(enorm, super::quantize::Rounding::Up) as u16).max(1)
        } else {
            0
        };
        Ok(Self { sketch: SimHashSketch::new(&e, ens)?, half_u_sq_q: half_u, enorm_q })
    }

    pub fn layout(&self) -> MetaLayout {
        MetaLayout::SimHash { bits: self.sketch.bits }
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend(self.sketch.to_bytes());
        self.layout().write_norms(self.half_u_sq_q as u32, self.enorm_q as u32, out);
    }

    pub fn decode(rec: &[u8], bits: usize) -> Result<Self> {
        let layout = MetaLayout::SimHash { bits };
        if rec.len() != layout.record_len() {
            return Err(Error::DimensionMismatch { expected: layout.record_len(), got: rec.len() });
        }
        let (h, e) = layout.read_norms(rec);
        Ok(Self { sketch: SimHashSketch::from_bytes(rec, bits), half_u_sq_q: h as u16, enorm_q: e as u16 })
    }
}

/// Evaluates packed SimHash records against one query sketch.
pub struct SimHashEvaluator<'a> {
    query: Vec<u8>,
    quant: &'a MetaQuantizers,
    layout: MetaLayout,
    bits: usize,
    eps: f64,
}

impl<'a> SimHashEvaluator<'a> {
    pub fn new(query: &SimHashSketch, quant: &'a MetaQuantizers, eps: f64) -> Self {
        Self {
            query: query.to_bytes(),
            quant,
            layout: MetaLayout::SimHash { bits: query.bits },
            bits: query.bits,
            eps,
        }
    }

    pub fn record_len(&self) -> usize {
        self.layout.record_len()
    }

    #[inline]
    pub fn eval(&self, rec: &[u8], ts: &ThresholdState) -> TestOutcome {
        let (h, e) = self.layout.read_norms(rec);
        if e == 0 {
            return TestOutcome::EarlyPass;
        }
        let ar = ts.ar(self.quant.half_u_sq(h), self.quant.enorm(e));
        if ar >= 1.0 {
            return TestOutcome::EarlyFail;
        }
        if ar <= 0.0 {
            return TestOutcome::EarlyPass;
        }
        let mut diff = 0u32;
        let full = self.bits / 8;
        for k in 0..full {
            diff += (rec[k] ^ self.query[k]).count_ones();
        }
        if self.bits % 8 != 0 {
            let mask = (1u8 << (self.bits % 8)) - 1;
            diff += ((rec[full] ^ self.query[full]) & mask).count_ones();
        }
        simhash_test(self.bits as u32 - diff, self.bits, ar, self.eps)
    }
}

/// Smallest projection count beyond which RCEOs beats SimHash with `n` bits
/// at angle `θ`: `exp(n / (2θ(π − θ)))`.
pub fn required_m_rceos(n: usize, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < PI) {
        return invalid("theta must lie in (0, pi)");
    }
    Ok(libm::exp(n as f64 / (2.0 * theta * (PI - theta))))
}
