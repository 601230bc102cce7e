//! Per-edge routing metadata and its packed little-endian layout.
//!
//! PEOs record, full mode: `[e[0] .. e[L]]` signed id bytes, then
//! `w_reg_q, w_res_q, var_idx`, then `‖u‖²/2` and `‖e‖` as u16. Compact mode
//! drops `e[0]` and the weight bytes and stores both norms in one byte each.

use alloc::vec;
use alloc::vec::Vec;

use super::decompose::decompose;
use super::quantize::{decode_weight, encode_weight, NormQuantizer, Rounding, VarianceGrid};
use crate::error::{Error, Result};
use crate::kernels;
use crate::projections::{extreme_index, extreme_index_full, ExtremeId, ProjectionEnsemble};
use crate::vecstore::PermutationPlan;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum MetaLayout {
    Peos { parts: usize, compact: bool },
    SimHash { bits: usize },
}

impl MetaLayout {
    pub fn record_len(&self) -> usize {
        match *self {
            MetaLayout::Peos { parts, compact: false } => parts + 1 + 3 + 4,
            MetaLayout::Peos { parts, compact: true } => parts + 2,
            MetaLayout::SimHash { bits } => bits.div_ceil(8) + 4,
        }
    }

    pub fn norm_bits(&self) -> u8 {
        match *self {
            MetaLayout::Peos { compact: true, .. } => 8,
            _ => 16,
        }
    }

    /// Byte offset of the two norm fields.
    pub fn norm_offset(&self) -> usize {
        self.record_len() - 2 * (self.norm_bits() as usize / 8)
    }

    #[inline]
    pub(crate) fn read_norms(&self, rec: &[u8]) -> (u32, u32) {
        let o = self.norm_offset();
        if self.norm_bits() == 8 {
            (rec[o] as u32, rec[o + 1] as u32)
        } else {
            (
                u16::from_le_bytes([rec[o], rec[o + 1]]) as u32,
                u16::from_le_bytes([rec[o + 2], rec[o + 3]]) as u32,
            )
        }
    }

    pub(crate) fn write_norms(&self, half_u: u32, enorm: u32, out: &mut Vec<u8>) {
        if self.norm_bits() == 8 {
            out.push(half_u as u8);
            out.push(enorm as u8);
        } else {
            out.extend_from_slice(&(half_u as u16).to_le_bytes());
            out.extend_from_slice(&(enorm as u16).to_le_bytes());
        }
    }
}

/// Dequantization parameters shared by every edge of an index.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct MetaQuantizers {
    /// `‖u‖²/2`, rounded down.
    pub half_u: NormQuantizer,
    /// `‖e‖`, rounded up; code 0 marks a degenerate (zero-length) edge.
    pub enorm: NormQuantizer,
    pub grid: VarianceGrid,
}

impl MetaQuantizers {
    pub fn fit(
        half_u_values: impl IntoIterator<Item = f32>,
        enorm_values: impl IntoIterator<Item = f32>,
        layout: MetaLayout,
        parts: usize,
    ) -> Result<Self> {
        let bits = layout.norm_bits();
        Ok(Self {
            half_u: NormQuantizer::fit(half_u_values, bits, false)?,
            enorm: NormQuantizer::fit(enorm_values.into_iter().filter(|&x| x > 0.0), bits, true)?,
            grid: VarianceGrid::for_partitions(parts),
        })
    }

    #[inline]
    pub fn half_u_sq(&self, code: u32) -> f32 {
        self.half_u.decode(code)
    }

    #[inline]
    pub fn enorm(&self, code: u32) -> f32 {
        self.enorm.decode(code)
    }
}

/// Decoded PEOs record of one directed edge `v → u`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeMeta {
    /// `e[0]` (residual part, full space) followed by `e[1..=L]`. In compact
    /// mode `e[0]` is NULL and not stored.
    pub ext_ids: Vec<ExtremeId>,
    pub w_reg_q: u8,
    pub w_res_q: u8,
    pub var_idx: u8,
    pub half_u_sq_q: u16,
    /// Zero marks a degenerate edge, which always passes.
    pub enorm_q: u16,
    pub compact: bool,
}

impl EdgeMeta {
    pub fn parts(&self) -> usize {
        self.ext_ids.len() - 1
    }

    pub fn layout(&self) -> MetaLayout {
        MetaLayout::Peos { parts: self.parts(), compact: self.compact }
    }

    pub fn w_reg(&self) -> f32 {
        if self.compact {
            1.0
        } else {
            decode_weight(self.w_reg_q)
        }
    }

    pub fn w_res(&self) -> f32 {
        if self.compact {
            0.0
        } else {
            decode_weight(self.w_res_q)
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.enorm_q == 0
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        let layout = self.layout();
        let start = if self.compact { 1 } else { 0 };
        out.extend(self.ext_ids[start..].iter().map(|id| id.to_code()));
        if !self.compact {
            out.extend_from_slice(&[self.w_reg_q, self.w_res_q, self.var_idx]);
        }
        layout.write_norms(self.half_u_sq_q as u32, self.enorm_q as u32, out);
    }

    pub fn decode(rec: &[u8], layout: MetaLayout, grid: VarianceGrid) -> Result<Self> {
        let MetaLayout::Peos { parts, compact } = layout else {
            return Err(Error::InvalidParameter("not a PEOs layout".into()));
        };
        if rec.len() != layout.record_len() {
            return Err(Error::DimensionMismatch { expected: layout.record_len(), got: rec.len() });
        }
        let mut ext_ids = Vec::with_capacity(parts + 1);
        let (ids, rest) = if compact {
            ext_ids.push(ExtremeId::NULL);
            rec.split_at(parts)
        } else {
            rec.split_at(parts + 1)
        };
        ext_ids.extend(ids.iter().map(|&c| ExtremeId::from_code(c)));
        let (w_reg_q, w_res_q, var_idx) = if compact {
            (255, 0, grid.row_for(1.0))
        } else {
            (rest[0], rest[1], rest[2])
        };
        let (h, e) = layout.read_norms(rec);
        Ok(Self { ext_ids, w_reg_q, w_res_q, var_idx, half_u_sq_q: h as u16, enorm_q: e as u16, compact })
    }

    /// Record for a zero-length edge (duplicate points).
    pub fn degenerate(parts: usize, compact: bool, half_u_sq_q: u16) -> Self {
        Self {
            ext_ids: vec![if compact { ExtremeId::NULL } else { ExtremeId::new(1) }]
                .into_iter()
                .chain(core::iter::repeat_n(ExtremeId::new(1), parts))
                .collect(),
            w_reg_q: 255,
            w_res_q: 0,
            var_idx: VarianceGrid::OVERFLOW,
            half_u_sq_q,
            enorm_q: 0,
            compact,
        }
    }
}

/// Unquantized per-edge quantities, computed once and then packed.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeGeometry {
    pub ext_ids: Vec<ExtremeId>,
    pub w_reg: f64,
    pub w_res: f64,
    pub half_u_sq: f32,
    pub enorm: f32,
}

/// Decomposition and extreme indices of `e = u − v` (after `plan`, when given).
pub fn edge_geometry(
    u: &[f32],
    v: &[f32],
    ens: &ProjectionEnsemble,
    plan: Option<&PermutationPlan>,
    compact: bool,
) -> Result<EdgeGeometry> {
    if u.len() != ens.dim() || v.len() != ens.dim() {
        return Err(Error::DimensionMismatch { expected: ens.dim(), got: u.len().max(v.len()) });
    }
    let mut e: Vec<f32> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    let half_u_sq = 0.5 * kernels::norm_sq(u);
    if let Some(plan) = plan {
        e = plan.apply(&e)?;
    }
    if e.iter().all(|&x| x == 0.0) {
        return Err(Error::Degenerate("edge endpoints coincide"));
    }
    let parts = ens.parts();
    let width = ens.sub_dim();
    let dec = decompose(&e, parts)?;
    let mut ext_ids = Vec::with_capacity(parts + 1);
    if compact {
        ext_ids.push(ExtremeId::NULL);
    } else {
        let res: Vec<f32> = dec.res.iter().map(|&x| x as f32).collect();
        ext_ids.push(extreme_index_full(&res, ens)?);
    }
    for i in 0..parts {
        ext_ids.push(extreme_index(&e[i * width..(i + 1) * width], ens, i)?);
    }
    let (w_reg, w_res) = if compact { (1.0, 0.0) } else { (dec.w_reg, dec.w_res) };
    Ok(EdgeGeometry { ext_ids, w_reg, w_res, half_u_sq, enorm: dec.norm as f32 })
}

impl EdgeGeometry {
    pub fn quantize(&self, quant: &MetaQuantizers, compact: bool) -> EdgeMeta {
        let parts = self.ext_ids.len() - 1;
        let var = self.w_reg * self.w_reg + parts as f64 * self.w_res * self.w_res;
        // NULL cannot be packed at m = 128; see ExtremeId::to_code
        let ext_ids = self
            .ext_ids
            .iter()
            .enumerate()
            .map(|(i, &id)| if id.is_null() && !(compact && i == 0) { ExtremeId::new(1) } else { id })
            .collect();
        EdgeMeta {
            ext_ids,
            w_reg_q: encode_weight(self.w_reg),
            w_res_q: encode_weight(self.w_res),
            var_idx: quant.grid.row_for(var),
            half_u_sq_q: quant.half_u.encode(self.half_u_sq, Rounding::Down) as u16,
            enorm_q: quant.enorm.encode(self.enorm, Rounding::Up).max(1) as u16,
            compact,
        }
    }
}

/// Builds the packed-ready record of edge `v → u`.
pub fn build_edge_meta(
    u: &[f32],
    v: &[f32],
    ens: &ProjectionEnsemble,
    plan: Option<&PermutationPlan>,
    quant: &MetaQuantizers,
    compact: bool,
) -> Result<EdgeMeta> {
    Ok(edge_geometry(u, v, ens, plan, compact)?.quantize(quant, compact))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededStream;

    fn gauss(s: &mut SeededStream, d: usize) -> Vec<f32> {
        (0..d).map(|_| s.gaussian() as f32).collect()
    }

    fn quant_for(layout: MetaLayout, parts: usize) -> MetaQuantizers {
        MetaQuantizers::fit([0.0f32, 200.0], [0.01f32, 40.0], layout, parts).unwrap()
    }

    #[test]
    fn single_partition_collapses() {
        let ens = ProjectionEnsemble::generate(1, 16, 1, 8).unwrap();
        let layout = MetaLayout::Peos { parts: 1, compact: false };
        let q = quant_for(layout, 1);
        let mut s = SeededStream::new(3, 0);
        let (u, v) = (gauss(&mut s, 16), gauss(&mut s, 16));
        let meta = build_edge_meta(&u, &v, &ens, None, &q, false).unwrap();
        assert_eq!(meta.ext_ids.len(), 2);
        assert_eq!((meta.w_reg_q, meta.w_res_q), (255, 0));
        assert_eq!((meta.w_reg(), meta.w_res()), (1.0, 0.0));
    }

    #[test]
    fn coincident_endpoints_are_rejected() {
        let ens = ProjectionEnsemble::generate(1, 8, 2, 8).unwrap();
        let layout = MetaLayout::Peos { parts: 2, compact: false };
        let q = quant_for(layout, 2);
        let u = [1.0f32; 8];
        assert!(matches!(build_edge_meta(&u, &u, &ens, None, &q, false), Err(Error::Degenerate(_))));
    }

    #[test]
    fn layout_sizes() {
        assert_eq!(MetaLayout::Peos { parts: 8, compact: false }.record_len(), 9 + 3 + 4);
        assert_eq!(MetaLayout::Peos { parts: 4, compact: true }.record_len(), 4 + 2);
        assert_eq!(MetaLayout::SimHash { bits: 64 }.record_len(), 12);
    }

    #[test]
    fn encode_decode_and_weight_invariant() {
        let mut s = SeededStream::new(8, 0);
        for (parts, compact) in [(8usize, false), (4, true), (1, false)] {
            let ens = ProjectionEnsemble::generate(2, 64, parts, 128).unwrap();
            let layout = MetaLayout::Peos { parts, compact };
            let q = quant_for(layout, parts);
            let step = 1.0 / 255.0;
            for _ in 0..200 {
                let (u, v) = (gauss(&mut s, 64), gauss(&mut s, 64));
                let meta = build_edge_meta(&u, &v, &ens, None, &q, compact).unwrap();
                let mut buf = Vec::new();
                meta.encode(&mut buf);
                assert_eq!(buf.len(), layout.record_len());
                assert_eq!(EdgeMeta::decode(&buf, layout, q.grid).unwrap(), meta);
                let (wr, ws) = (meta.w_reg(), meta.w_res());
                let sum = wr * wr + ws * ws;
                assert!(sum >= 1.0 - 2.0 * step && sum <= 1.0 + 2.0 * step, "{sum}");
                assert!(q.enorm(meta.enorm_q as u32) > 0.0);
            }
        }
    }

    #[test]
    fn norms_round_in_the_loosening_direction() {
        let ens = ProjectionEnsemble::generate(2, 32, 4, 16).unwrap();
        let layout = MetaLayout::Peos { parts: 4, compact: false };
        let q = quant_for(layout, 4);
        let mut s = SeededStream::new(1, 0);
        for _ in 0..1000 {
            let (u, v) = (gauss(&mut s, 32), gauss(&mut s, 32));
            let g = edge_geometry(&u, &v, &ens, None, false).unwrap();
            let meta = g.quantize(&q, false);
            assert!(q.half_u_sq(meta.half_u_sq_q as u32) <= g.half_u_sq);
            assert!(q.enorm(meta.enorm_q as u32) >= g.enorm);
            let var = g.w_reg * g.w_reg + 4.0 * g.w_res * g.w_res;
            if meta.var_idx == VarianceGrid::OVERFLOW {
                assert!(var > q.grid.v_max);
            } else {
                assert!(q.grid.value(meta.var_idx as usize) >= var);
            }
        }
    }

    #[test]
    fn ids_match_regenerated_ensemble() {
        let mut s = SeededStream::new(5, 0);
        let layout = MetaLayout::Peos { parts: 8, compact: false };
        let q = quant_for(layout, 8);
        let ens = ProjectionEnsemble::generate(77, 128, 8, 128).unwrap();
        let metas: Vec<(Vec<f32>, Vec<f32>, EdgeMeta)> = (0..50)
            .map(|_| {
                let (u, v) = (gauss(&mut s, 128), gauss(&mut s, 128));
                let m = build_edge_meta(&u, &v, &ens, None, &q, false).unwrap();
                (u, v, m)
            })
            .collect();
        let again = ProjectionEnsemble::generate(77, 128, 8, 128).unwrap();
        for (u, v, meta) in metas {
            // from scratch: residual, block argmax by brute force
            let e: Vec<f32> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
            for i in 0..8 {
                let blk = &e[i * 16..(i + 1) * 16];
                let mut best = (0usize, 0.0f64, 1i16);
                for j in 0..128 {
                    let p: f64 = blk.iter().zip(again.sub_vector(i, j)).map(|(a, b)| *a as f64 * *b as f64).sum();
                    if p.abs() > best.1 {
                        best = (j, p.abs(), if p < 0.0 { -1 } else { 1 });
                    }
                }
                assert_eq!(meta.ext_ids[i + 1], ExtremeId::new(best.2 * (best.0 as i16 + 1)));
            }
        }
    }

    #[test]
    fn permutation_is_applied_to_the_residual() {
        let mut s = SeededStream::new(6, 0);
        let ens = ProjectionEnsemble::generate(3, 16, 4, 8).unwrap();
        let avgs: Vec<f64> = (0..16).map(|_| s.uniform()).collect();
        let plan = crate::vecstore::build_permutation(&avgs, 4).unwrap();
        let (u, v) = (gauss(&mut s, 16), gauss(&mut s, 16));
        let a = edge_geometry(&u, &v, &ens, Some(&plan), false).unwrap();
        let b = edge_geometry(&plan.apply(&u).unwrap(), &plan.apply(&v).unwrap(), &ens, None, false).unwrap();
        assert_eq!(a.ext_ids, b.ext_ids);
        assert!((a.w_reg - b.w_reg).abs() < 1e-12);
    }
}
