//! Gaussian projection ensembles and per-query projection tables.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::kernels;
use crate::rng::{stream, SeededStream, RNG_ID};

/// Largest ensemble size whose signed indices fit in one byte.
pub const MAX_PROJECTIONS: usize = 128;

/// Signed 1-based index of the extreme projection vector, `±j` with
/// `1 <= j <= m`. Zero is the reserved NULL returned for a zero input.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct ExtremeId(i16);

impl ExtremeId {
    pub const NULL: ExtremeId = ExtremeId(0);

    pub fn new(signed: i16) -> Self {
        ExtremeId(signed)
    }

    pub fn get(self) -> i16 {
        self.0
    }

    pub fn is_null(self) -> bool {
        self.0 == 0
    }

    /// 0-based position of the vector, `None` for NULL.
    pub fn index(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.unsigned_abs() as usize - 1)
    }

    pub fn sign(self) -> f32 {
        match self.0 {
            0 => 0.0,
            x if x > 0 => 1.0,
            _ => -1.0,
        }
    }

    /// Wire byte: sign bit, then `j - 1` in the low seven bits. All 256 codes
    /// are taken at `m = 128`, so NULL is packed as `+1`, the argmax-with-ties
    /// answer for a zero vector.
    pub fn to_code(self) -> u8 {
        match self.0 {
            0 => 0,
            x if x > 0 => (x - 1) as u8,
            x => 0x80 | ((-x - 1) as u8),
        }
    }

    pub fn from_code(code: u8) -> Self {
        let j = (code & 0x7f) as i16 + 1;
        if code & 0x80 != 0 {
            ExtremeId(-j)
        } else {
            ExtremeId(j)
        }
    }
}

/// `L` groups of `m` Gaussian vectors in each `d/L`-dimensional subspace,
/// plus `m` Gaussian vectors in the full space. Regenerated bit-for-bit from
/// `(seed, rng_id, L, m, d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionEnsemble {
    dim: usize,
    parts: usize,
    m: usize,
    seed: u64,
    rng_id: u32,
    /// `[i][j][k]`: subspace, vector, coordinate.
    sub: Vec<f32>,
    /// `[j][k]`.
    full: Vec<f32>,
}

impl ProjectionEnsemble {
    pub fn generate(seed: u64, dim: usize, parts: usize, m: usize) -> Result<Self> {
        if parts == 0 || dim == 0 || dim % parts != 0 {
            return invalid(alloc::format!("dimension {dim} is not divisible by L={parts}"));
        }
        if !(2..=MAX_PROJECTIONS).contains(&m) {
            return invalid(alloc::format!("m={m} outside 2..={MAX_PROJECTIONS}"));
        }
        let mut sub = vec![0.0f32; parts * m * (dim / parts)];
        SeededStream::new(seed, stream::SUB_PROJECTIONS).fill_gaussian(&mut sub);
        let mut full = vec![0.0f32; m * dim];
        SeededStream::new(seed, stream::FULL_PROJECTIONS).fill_gaussian(&mut full);
        Ok(Self { dim, parts, m, seed, rng_id: RNG_ID, sub, full })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn parts(&self) -> usize {
        self.parts
    }

    pub fn sub_dim(&self) -> usize {
        self.dim / self.parts
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng_id(&self) -> u32 {
        self.rng_id
    }

    /// Vector `j` (0-based) of subspace `i` (0-based).
    pub fn sub_vector(&self, i: usize, j: usize) -> &[f32] {
        let w = self.sub_dim();
        let start = (i * self.m + j) * w;
        &self.sub[start..start + w]
    }

    pub fn full_vector(&self, j: usize) -> &[f32] {
        &self.full[j * self.dim..(j + 1) * self.dim]
    }

    pub fn sub_entries(&self) -> &[f32] {
        &self.sub
    }
}

fn extreme_of<'a>(x: &[f32], vectors: impl Iterator<Item = &'a [f32]>) -> ExtremeId {
    let mut best = 0.0f32;
    let mut best_j = 0usize;
    let mut best_sign = 1i16;
    for (j, a) in vectors.enumerate() {
        let p = kernels::dot(x, a);
        if p.abs() > best {
            best = p.abs();
            best_j = j + 1;
            best_sign = if p < 0.0 { -1 } else { 1 };
        }
    }
    if best_j == 0 {
        return ExtremeId::NULL;
    }
    ExtremeId(best_sign * best_j as i16)
}

/// Signed index of the subspace-`i` projection vector with the largest
/// `|xᵀa|`, where `x` is the block of a vector lying in subspace `i` (0-based).
pub fn extreme_index(x: &[f32], ens: &ProjectionEnsemble, i: usize) -> Result<ExtremeId> {
    if x.len() != ens.sub_dim() {
        return Err(Error::DimensionMismatch { expected: ens.sub_dim(), got: x.len() });
    }
    if i >= ens.parts {
        return invalid(alloc::format!("subspace {i} out of range for L={}", ens.parts));
    }
    Ok(extreme_of(x, (0..ens.m).map(|j| ens.sub_vector(i, j))))
}

/// Like [`extreme_index`] over the full-space vectors.
pub fn extreme_index_full(x: &[f32], ens: &ProjectionEnsemble) -> Result<ExtremeId> {
    if x.len() != ens.dim {
        return Err(Error::DimensionMismatch { expected: ens.dim, got: x.len() });
    }
    Ok(extreme_of(x, (0..ens.m).map(|j| ens.full_vector(j))))
}

/// All inner products of the normalized query with an ensemble, built once
/// per query.
#[derive(Clone, Debug)]
pub struct QueryProjectionTable {
    parts: usize,
    m: usize,
    /// `[i][j]` = q′_iᵀa^i_j.
    pub sub_proj: Vec<f32>,
    /// `[j]` = q′ᵀb_j.
    pub full_proj: Vec<f32>,
    /// ‖q‖ of the query before normalization.
    pub qnorm: f32,
    pub qn: Vec<f32>,
    /// `[i][code]` = signed projection for a packed [`ExtremeId`] code.
    sub_lut: Vec<f32>,
    full_lut: Vec<f32>,
}

impl QueryProjectionTable {
    pub fn parts(&self) -> usize {
        self.parts
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn sub(&self, i: usize, j: usize) -> f32 {
        self.sub_proj[i * self.m + j]
    }

    /// `sgn(id) · q′_iᵀa^i_{|id|}`, zero for NULL.
    pub fn signed_sub(&self, i: usize, id: ExtremeId) -> f32 {
        id.index().map_or(0.0, |j| id.sign() * self.sub(i, j))
    }

    pub fn signed_full(&self, id: ExtremeId) -> f32 {
        id.index().map_or(0.0, |j| id.sign() * self.full_proj[j])
    }

    /// Lookup by packed code of subspace `i`.
    #[inline]
    pub fn sub_code(&self, i: usize, code: u8) -> f32 {
        self.sub_lut[(i << 8) | code as usize]
    }

    #[inline]
    pub fn full_code(&self, code: u8) -> f32 {
        self.full_lut[code as usize]
    }
}

pub fn project_query(q: &[f32], ens: &ProjectionEnsemble) -> Result<QueryProjectionTable> {
    if q.len() != ens.dim {
        return Err(Error::DimensionMismatch { expected: ens.dim, got: q.len() });
    }
    let qnorm = kernels::norm_f64(q);
    if qnorm == 0.0 {
        return Err(Error::Degenerate("zero query vector"));
    }
    let qn: Vec<f32> = q.iter().map(|&x| (x as f64 / qnorm) as f32).collect();
    let w = ens.sub_dim();
    let (parts, m) = (ens.parts, ens.m);
    let mut sub_proj = vec![0.0f32; parts * m];
    for i in 0..parts {
        let block = &qn[i * w..(i + 1) * w];
        for j in 0..m {
            sub_proj[i * m + j] = kernels::dot_f64(block, ens.sub_vector(i, j)) as f32;
        }
    }
    let full_proj: Vec<f32> = (0..m).map(|j| kernels::dot_f64(&qn, ens.full_vector(j)) as f32).collect();

    let mut sub_lut = vec![0.0f32; parts * 256];
    let mut full_lut = vec![0.0f32; 256];
    for code in 0..=255u8 {
        let id = ExtremeId::from_code(code);
        let j = id.index().unwrap();
        if j < m {
            for i in 0..parts {
                sub_lut[(i << 8) | code as usize] = id.sign() * sub_proj[i * m + j];
            }
            full_lut[code as usize] = id.sign() * full_proj[j];
        }
    }
    Ok(QueryProjectionTable {
        parts,
        m,
        sub_proj,
        full_proj,
        qnorm: qnorm as f32,
        qn,
        sub_lut,
        full_lut,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(s: &mut SeededStream, d: usize) -> Vec<f32> {
        (0..d).map(|_| s.gaussian() as f32).collect()
    }

    #[test]
    fn generation_is_deterministic_and_seed_sensitive() {
        let a = ProjectionEnsemble::generate(42, 64, 4, 16).unwrap();
        let b = ProjectionEnsemble::generate(42, 64, 4, 16).unwrap();
        assert_eq!(a, b);
        let c = ProjectionEnsemble::generate(43, 64, 4, 16).unwrap();
        let diff = a.sub[..100].iter().zip(&c.sub[..100]).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
        assert!(diff > 0.0);
    }

    #[test]
    fn generation_rejects_bad_shapes() {
        assert!(ProjectionEnsemble::generate(1, 10, 3, 8).is_err());
        assert!(ProjectionEnsemble::generate(1, 8, 2, 1).is_err());
        assert!(ProjectionEnsemble::generate(1, 8, 2, 129).is_err());
    }

    #[test]
    fn entries_are_standard_normal() {
        // 10^5 entries: mean within 3σ/√n, variance within 3·√(2/n).
        let ens = ProjectionEnsemble::generate(5, 128, 8, 98).unwrap();
        let xs: Vec<f64> = ens.sub.iter().take(100_000).map(|&x| x as f64).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 3.0 / n.sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n).sqrt(), "var {var}");
    }

    #[test]
    fn self_projection_wins_argmax() {
        let ens = ProjectionEnsemble::generate(9, 512, 8, 8).unwrap();
        let x = ens.sub_vector(2, 2).to_vec();
        // brute-force argmax
        let prods: Vec<f64> = (0..8).map(|j| kernels::dot_f64(&x, ens.sub_vector(2, j))).collect();
        let (jmax, _) = prods.iter().enumerate().fold((0, 0.0f64), |acc, (j, p)| if p.abs() > acc.1 { (j, p.abs()) } else { acc });
        assert_eq!(jmax, 2);
        assert_eq!(extreme_index(&x, &ens, 2).unwrap(), ExtremeId::new(3));

        let b5 = ens.full_vector(4).to_vec();
        assert_eq!(extreme_index_full(&b5, &ens).unwrap(), ExtremeId::new(5));
    }

    #[test]
    fn sign_antisymmetry_and_scale_invariance() {
        let ens = ProjectionEnsemble::generate(3, 64, 4, 32).unwrap();
        let mut s = SeededStream::new(1, 0);
        for _ in 0..200 {
            let x = gauss(&mut s, 16);
            let neg: Vec<f32> = x.iter().map(|v| -v).collect();
            let scaled: Vec<f32> = x.iter().map(|v| v * 3.5).collect();
            let id = extreme_index(&x, &ens, 1).unwrap();
            assert_eq!(extreme_index(&neg, &ens, 1).unwrap().get(), -id.get());
            assert_eq!(extreme_index(&scaled, &ens, 1).unwrap(), id);
            let full = gauss(&mut s, 64);
            let fneg: Vec<f32> = full.iter().map(|v| -v).collect();
            let fid = extreme_index_full(&full, &ens).unwrap();
            assert_eq!(extreme_index_full(&fneg, &ens).unwrap().get(), -fid.get());
        }
    }

    #[test]
    fn zero_input_is_null() {
        let ens = ProjectionEnsemble::generate(3, 8, 2, 4).unwrap();
        assert!(extreme_index(&[0.0; 4], &ens, 0).unwrap().is_null());
        assert!(extreme_index(&[0.0; 3], &ens, 0).is_err());
        assert!(extreme_index(&[1.0; 4], &ens, 2).is_err());
    }

    #[test]
    fn forced_by_definition_m2() {
        // products (0.5, -0.9) -> -2
        let ens = ProjectionEnsemble {
            dim: 2,
            parts: 1,
            m: 2,
            seed: 0,
            rng_id: RNG_ID,
            sub: vec![0.5, 0.0, -0.9, 0.0],
            full: vec![0.5, 0.0, -0.9, 0.0],
        };
        assert_eq!(extreme_index(&[1.0, 0.0], &ens, 0).unwrap(), ExtremeId::new(-2));
    }

    #[test]
    fn code_round_trip() {
        for v in (-128i16..=128).filter(|&v| v != 0) {
            let id = ExtremeId::new(v);
            assert_eq!(ExtremeId::from_code(id.to_code()), id);
        }
        assert_eq!(ExtremeId::NULL.to_code(), ExtremeId::new(1).to_code());
    }

    #[test]
    fn projection_table_matches_direct_products() {
        let ens = ProjectionEnsemble::generate(17, 96, 6, 20).unwrap();
        let mut s = SeededStream::new(2, 0);
        let q = gauss(&mut s, 96);
        let t = project_query(&q, &ens).unwrap();
        let qn = q.iter().map(|x| *x as f64).collect::<Vec<_>>();
        let qnorm = qn.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((t.qnorm as f64 - qnorm).abs() < 1e-6 * qnorm);
        for i in 0..6 {
            for j in 0..20 {
                let a = ens.sub_vector(i, j);
                let want: f64 = (0..16).map(|k| qn[i * 16 + k] / qnorm * a[k] as f64).sum();
                assert!((t.sub(i, j) as f64 - want).abs() < 1e-6);
                let id = ExtremeId::new(-(j as i16 + 1));
                assert_eq!(t.sub_code(i, id.to_code()), -t.sub(i, j));
            }
        }
        for j in 0..20 {
            let b = ens.full_vector(j);
            let want: f64 = (0..96).map(|k| qn[k] / qnorm * b[k] as f64).sum();
            assert!((t.full_proj[j] as f64 - want).abs() < 1e-6);
        }
        assert!(project_query(&[0.0; 96], &ens).is_err());
    }

    #[test]
    fn parallel_query_hits_cauchy_schwarz_equality() {
        let ens = ProjectionEnsemble::generate(4, 32, 4, 8).unwrap();
        let mut q = vec![0.0f32; 32];
        q[..8].copy_from_slice(ens.sub_vector(0, 0));
        let t = project_query(&q, &ens).unwrap();
        let qn = kernels::norm_f64(&t.qn[..8]);
        let an = kernels::norm_f64(ens.sub_vector(0, 0));
        assert!((t.sub(0, 0) as f64 - qn * an).abs() < 1e-5);
    }

    #[test]
    fn table_entry_at_extreme_matches_inner_product() {
        let ens = ProjectionEnsemble::generate(8, 64, 8, 64).unwrap();
        let mut s = SeededStream::new(6, 0);
        let q = gauss(&mut s, 64);
        let t = project_query(&q, &ens).unwrap();
        let e = gauss(&mut s, 64);
        for i in 0..8 {
            let id = extreme_index(&e[i * 8..(i + 1) * 8], &ens, i).unwrap();
            let direct = kernels::dot_f64(&t.qn[i * 8..(i + 1) * 8], ens.sub_vector(i, id.index().unwrap()));
            assert!((t.sub(i, id.index().unwrap()) as f64 - direct).abs() < 1e-6);
        }
    }
}
