//! The PEOs test, its single-partition special case (RCEOs), and the batched
//! evaluation used during graph traversal.

use alloc::vec::Vec;

use super::meta::{EdgeMeta, MetaLayout, MetaQuantizers};
use super::quantile::QuantileTable;
use super::quantize::decode_weight;
use super::{compute_ar, ThresholdState};
use crate::projections::QueryProjectionTable;

/// Result of one routing test. The early variants are the `A_r ≤ 0` and
/// `A_r ≥ 1` shortcuts that skip the projection lookups.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum TestOutcome {
    EarlyPass,
    EarlyFail,
    Pass,
    Fail,
}

impl TestOutcome {
    #[inline]
    pub fn passed(self) -> bool {
        matches!(self, TestOutcome::EarlyPass | TestOutcome::Pass)
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct TestCounts {
    pub evaluated: u64,
    pub passed: u64,
    pub early_pass: u64,
    pub early_fail: u64,
}

impl TestCounts {
    pub fn record(&mut self, o: TestOutcome) {
        self.evaluated += 1;
        match o {
            TestOutcome::EarlyPass => {
                self.passed += 1;
                self.early_pass += 1;
            }
            TestOutcome::Pass => self.passed += 1,
            TestOutcome::EarlyFail => self.early_fail += 1,
            TestOutcome::Fail => {}
        }
    }
}

#[inline]
fn combine(w_reg: f32, w_res: f32, sqrt_l: f32, h1: f32, h2: f32) -> f32 {
    w_reg * h1 + (sqrt_l * w_res) * h2
}

#[inline]
fn decide(ar: f32, h: impl FnOnce() -> f32, threshold: impl FnOnce(f32) -> f32) -> TestOutcome {
    if ar >= 1.0 {
        TestOutcome::EarlyFail
    } else if ar <= 0.0 {
        TestOutcome::EarlyPass
    } else if h() >= threshold(ar) {
        TestOutcome::Pass
    } else {
        TestOutcome::Fail
    }
}

/// `H(e) = w_reg·H1 + √L·w_res·H2` of a decoded record.
pub fn test_statistic(meta: &EdgeMeta, qpt: &QueryProjectionTable) -> f32 {
    let parts = meta.parts();
    let mut h1 = 0.0f32;
    for i in 0..parts {
        h1 += qpt.signed_sub(i, meta.ext_ids[i + 1]);
    }
    let h2 = qpt.signed_full(meta.ext_ids[0]);
    combine(meta.w_reg(), meta.w_res(), libm::sqrtf(parts as f32), h1, h2)
}

/// PEOs decision for one edge: fail when `A_r ≥ 1`, pass when `A_r ≤ 0`,
/// otherwise pass iff `H(e) ≥ T_r(e)`.
pub fn peos_test(
    meta: &EdgeMeta,
    tbl: &QuantileTable,
    qpt: &QueryProjectionTable,
    ts: &ThresholdState,
    quant: &MetaQuantizers,
) -> TestOutcome {
    if meta.is_degenerate() {
        return TestOutcome::EarlyPass;
    }
    let ar = compute_ar(meta, ts, quant);
    decide(ar, || test_statistic(meta, qpt), |ar| tbl.lookup(meta.var_idx, ar))
}

/// RCEOs: the extreme projection of the whole residual against an
/// `L = 1` quantile threshold. `meta` must be a single-partition record.
pub fn rceos_test(
    meta: &EdgeMeta,
    qpt: &QueryProjectionTable,
    ts: &ThresholdState,
    quant: &MetaQuantizers,
    tbl: &QuantileTable,
) -> TestOutcome {
    assert_eq!(meta.parts(), 1, "RCEOs needs single-partition metadata");
    if meta.is_degenerate() {
        return TestOutcome::EarlyPass;
    }
    let ar = compute_ar(meta, ts, quant);
    let row = tbl.grid().row_for(1.0);
    decide(ar, || qpt.signed_sub(0, meta.ext_ids[1]), |ar| tbl.lookup(row, ar))
}

/// Evaluates packed PEOs records against one query. Borrowed per search so
/// that table lookups need no further setup.
pub struct PeosEvaluator<'a> {
    tbl: &'a QuantileTable,
    qpt: &'a QueryProjectionTable,
    quant: &'a MetaQuantizers,
    parts: usize,
    compact: bool,
    record_len: usize,
    sqrt_l: f32,
    compact_row: u8,
    layout: MetaLayout,
}

/// Edges evaluated together in [`PeosEvaluator::eval_block`].
pub const BLOCK: usize = 16;

impl<'a> PeosEvaluator<'a> {
    pub fn new(
        layout: MetaLayout,
        tbl: &'a QuantileTable,
        qpt: &'a QueryProjectionTable,
        quant: &'a MetaQuantizers,
    ) -> Self {
        let MetaLayout::Peos { parts, compact } = layout else {
            panic!("PeosEvaluator needs a PEOs layout");
        };
        Self {
            tbl,
            qpt,
            quant,
            parts,
            compact,
            record_len: layout.record_len(),
            sqrt_l: libm::sqrtf(parts as f32),
            compact_row: quant.grid.row_for(1.0),
            layout,
        }
    }

    pub fn record_len(&self) -> usize {
        self.record_len
    }

    #[inline]
    fn ar(&self, rec: &[u8], ts: &ThresholdState) -> (f32, bool) {
        let (h, e) = self.layout.read_norms(rec);
        (ts.ar(self.quant.half_u_sq(h), self.quant.enorm(e)), e == 0)
    }

    #[inline]
    fn statistic(&self, rec: &[u8]) -> (f32, u8) {
        if self.compact {
            let mut h1 = 0.0f32;
            for i in 0..self.parts {
                h1 += self.qpt.sub_code(i, rec[i]);
            }
            (combine(1.0, 0.0, self.sqrt_l, h1, 0.0), self.compact_row)
        } else {
            let mut h1 = 0.0f32;
            for i in 0..self.parts {
                h1 += self.qpt.sub_code(i, rec[i + 1]);
            }
            let h2 = self.qpt.full_code(rec[0]);
            let w = self.parts + 1;
            (combine(decode_weight(rec[w]), decode_weight(rec[w + 1]), self.sqrt_l, h1, h2), rec[w + 2])
        }
    }

    /// Decision for one packed record.
    #[inline]
    pub fn eval(&self, rec: &[u8], ts: &ThresholdState) -> TestOutcome {
        let (ar, degenerate) = self.ar(rec, ts);
        if degenerate {
            return TestOutcome::EarlyPass;
        }
        if ar >= 1.0 {
            return TestOutcome::EarlyFail;
        }
        if ar <= 0.0 {
            return TestOutcome::EarlyPass;
        }
        let (h, row) = self.statistic(rec);
        if h >= self.tbl.lookup(row, ar) {
            TestOutcome::Pass
        } else {
            TestOutcome::Fail
        }
    }

    /// Decisions for up to [`BLOCK`] contiguous records sharing one
    /// threshold state.
    pub fn eval_block(&self, recs: &[u8], ts: &ThresholdState, out: &mut [TestOutcome]) {
        let n = recs.len() / self.record_len;
        debug_assert!(n <= BLOCK && out.len() >= n);
        let mut ar = [0.0f32; BLOCK];
        let mut degenerate = [false; BLOCK];
        for (k, rec) in recs.chunks_exact(self.record_len).enumerate() {
            (ar[k], degenerate[k]) = self.ar(rec, ts);
        }
        let mut h = [0.0f32; BLOCK];
        let mut thr = [0.0f32; BLOCK];
        for (k, rec) in recs.chunks_exact(self.record_len).enumerate() {
            if ar[k] > 0.0 && ar[k] < 1.0 {
                let (stat, row) = self.statistic(rec);
                h[k] = stat;
                thr[k] = self.tbl.lookup(row, ar[k]);
            }
        }
        for k in 0..n {
            out[k] = if degenerate[k] {
                TestOutcome::EarlyPass
            } else if ar[k] >= 1.0 {
                TestOutcome::EarlyFail
            } else if ar[k] <= 0.0 {
                TestOutcome::EarlyPass
            } else if h[k] >= thr[k] {
                TestOutcome::Pass
            } else {
                TestOutcome::Fail
            };
        }
    }
}

/// Batched PEOs over a contiguous run of packed records, all edges of one
/// expanded node. Equivalent to calling [`peos_test`] on each decoded record.
pub fn batch_peos_test(
    records: &[u8],
    layout: MetaLayout,
    tbl: &QuantileTable,
    qpt: &QueryProjectionTable,
    ts: &ThresholdState,
    quant: &MetaQuantizers,
) -> (Vec<bool>, TestCounts) {
    let ev = PeosEvaluator::new(layout, tbl, qpt, quant);
    let mut bitmap = Vec::with_capacity(records.len() / ev.record_len);
    let mut counts = TestCounts::default();
    let mut out = [TestOutcome::Fail; BLOCK];
    for block in records.chunks(BLOCK * ev.record_len) {
        let n = block.len() / ev.record_len;
        ev.eval_block(block, ts, &mut out);
        for &o in &out[..n] {
            counts.record(o);
            bitmap.push(o.passed());
        }
    }
    (bitmap, counts)
}
