//! Scalar quantizers for the per-edge norms and weights.

use crate::error::{invalid, Result};

/// Affine scalar quantizer over `[min, max]` with `bits` bits per code and a
/// directed rounding mode. With `reserve_zero`, code 0 is kept out of the
/// range and codes `1..=2^bits−1` cover `[min, max]`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct NormQuantizer {
    pub min: f32,
    pub max: f32,
    pub bits: u8,
    pub reserve_zero: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Rounding {
    Down,
    Up,
}

impl NormQuantizer {
    pub fn new(min: f32, max: f32, bits: u8, reserve_zero: bool) -> Result<Self> {
        if !(bits == 8 || bits == 16) {
            return invalid(alloc::format!("unsupported quantizer width {bits}"));
        }
        if !(min.is_finite() && max.is_finite()) || min > max {
            return invalid("quantizer range must be finite with min <= max");
        }
        Ok(Self { min, max, bits, reserve_zero })
    }

    /// Range covering every value of `values`.
    pub fn fit(values: impl IntoIterator<Item = f32>, bits: u8, reserve_zero: bool) -> Result<Self> {
        let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo > hi {
            lo = 0.0;
            hi = 0.0;
        }
        Self::new(lo, hi, bits, reserve_zero)
    }

    fn first(&self) -> u32 {
        self.reserve_zero as u32
    }

    fn last(&self) -> u32 {
        (1u32 << self.bits) - 1
    }

    pub fn step(&self) -> f64 {
        let span = (self.last() - self.first()) as f64;
        (self.max as f64 - self.min as f64) / span
    }

    pub fn decode(&self, code: u32) -> f32 {
        let k = code.saturating_sub(self.first()).min(self.last() - self.first());
        if k == self.last() - self.first() {
            return self.max;
        }
        (self.min as f64 + k as f64 * self.step()) as f32
    }

    /// Code whose decoded value lies on the requested side of `x`. Values
    /// outside the range are clamped to the nearest end code.
    pub fn encode(&self, x: f32, rounding: Rounding) -> u32 {
        let (first, last) = (self.first(), self.last());
        let step = self.step();
        if step == 0.0 || x <= self.min {
            return first;
        }
        if x >= self.max {
            return last;
        }
        let t = (x as f64 - self.min as f64) / step;
        let mut code = match rounding {
            Rounding::Down => libm::floor(t) as u32 + first,
            Rounding::Up => libm::ceil(t) as u32 + first,
        }
        .clamp(first, last);
        match rounding {
            Rounding::Down => {
                while code > first && self.decode(code) > x {
                    code -= 1;
                }
            }
            Rounding::Up => {
                while code < last && self.decode(code) < x {
                    code += 1;
                }
            }
        }
        code
    }
}

/// One-byte weight code `round(w · 255)`.
pub fn encode_weight(w: f64) -> u8 {
    libm::round(w.clamp(0.0, 1.0) * 255.0) as u8
}

pub fn decode_weight(code: u8) -> f32 {
    code as f32 / 255.0
}

/// Uniform grid of variances `v_max·(k+1)/ROWS`, `k < ROWS`. Row index
/// [`VarianceGrid::OVERFLOW`] marks a variance beyond the grid.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct VarianceGrid {
    pub v_max: f64,
}

impl VarianceGrid {
    pub const ROWS: usize = 255;
    pub const OVERFLOW: u8 = 255;

    pub fn for_partitions(parts: usize) -> Self {
        Self { v_max: 1.0 + (parts as f64 - 1.0) * 0.25 }
    }

    pub fn value(&self, row: usize) -> f64 {
        self.v_max * (row + 1) as f64 / Self::ROWS as f64
    }

    /// Smallest row whose variance is `>= v`.
    pub fn row_for(&self, v: f64) -> u8 {
        if v.is_nan() || v > self.v_max {
            return Self::OVERFLOW;
        }
        let mut k = (libm::ceil(v / self.v_max * Self::ROWS as f64) as i64 - 1).clamp(0, Self::ROWS as i64 - 1) as usize;
        while k + 1 < Self::ROWS && self.value(k) < v {
            k += 1;
        }
        while k > 0 && self.value(k - 1) >= v {
            k -= 1;
        }
        if self.value(k) < v {
            return Self::OVERFLOW;
        }
        k as u8
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededStream;

    #[test]
    fn directed_rounding_stays_within_one_step() {
        let mut s = SeededStream::new(12, 0);
        let values: alloc::vec::Vec<f32> = (0..10_000).map(|_| (s.uniform() * 40.0 + 0.01) as f32).collect();
        for bits in [8u8, 16] {
            for reserve in [false, true] {
                let q = NormQuantizer::fit(values.iter().copied(), bits, reserve).unwrap();
                // decoded values carry one f32 rounding on top of the step
                let tol = |x: f32| q.step() as f32 * 1.0001 + x * f32::EPSILON;
                for &x in &values {
                    let down = q.decode(q.encode(x, Rounding::Down));
                    let up = q.decode(q.encode(x, Rounding::Up));
                    assert!(down <= x && x - down <= tol(x), "down {x} {down}");
                    assert!(up >= x && up - x <= tol(x), "up {x} {up}");
                    if reserve {
                        assert!(q.encode(x, Rounding::Up) >= 1);
                    }
                }
            }
        }
    }

    #[test]
    fn degenerate_range() {
        let q = NormQuantizer::fit([0.5f32, 0.5], 16, false).unwrap();
        assert_eq!(q.decode(q.encode(0.5, Rounding::Up)), 0.5);
        assert!(NormQuantizer::new(0.0, 1.0, 12, false).is_err());
        assert!(NormQuantizer::new(2.0, 1.0, 8, false).is_err());
    }

    #[test]
    fn weights() {
        assert_eq!(encode_weight(1.0), 255);
        assert_eq!(encode_weight(0.0), 0);
        assert!((decode_weight(encode_weight(0.3)) - 0.3).abs() <= 0.5 / 255.0 + 1e-7);
    }

    #[test]
    fn variance_rows_round_up() {
        let g = VarianceGrid::for_partitions(8);
        let mut s = SeededStream::new(2, 0);
        for _ in 0..10_000 {
            let v = 1.0 + s.uniform() * (g.v_max - 1.0);
            let row = g.row_for(v) as usize;
            assert!(g.value(row) >= v);
            assert!(row == 0 || g.value(row - 1) < v);
        }
        assert_eq!(g.row_for(g.v_max * 1.01), VarianceGrid::OVERFLOW);
        assert_eq!(g.row_for(g.v_max) as usize, VarianceGrid::ROWS - 1);
    }
}
