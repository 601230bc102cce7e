//! Recall, throughput and guarantee audits over a fixed query set.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use peos_core::graph::{brute_force_knn_batch, GateEvent, Neighbor};
use peos_core::{Dataset, HnswIndex, Metric, RoutingConfig, RoutingMode, SearchParams, SearchStats};

use crate::error::{Error, Result};
use crate::io;

/// Mean over queries of `|result ∩ truth[..k]| / k`.
pub fn compute_recall(results: &[Vec<u32>], truth: &[Vec<u32>], k: usize) -> Result<f64> {
    if results.len() != truth.len() {
        return Err(Error::Usage(format!("{} result rows but {} truth rows", results.len(), truth.len())));
    }
    if k == 0 || results.is_empty() {
        return Err(Error::Usage("recall needs k > 0 and at least one query".into()));
    }
    let mut hits = 0usize;
    for (res, gt) in results.iter().zip(truth) {
        if gt.len() < k {
            return Err(Error::Usage(format!("ground truth has {} ids per query, need {k}", gt.len())));
        }
        let gt = &gt[..k];
        hits += res.iter().take(k).filter(|id| gt.contains(id)).count();
    }
    Ok(hits as f64 / (k * results.len()) as f64)
}

/// Exact neighbors of every query, cached at `path` as ivecs when given.
pub fn ground_truth(base: &Dataset, queries: &Dataset, k: usize, metric: Metric, cache: Option<&Path>) -> Result<Vec<Vec<u32>>> {
    if let Some(p) = cache {
        if p.exists() {
            let gt = io::read_ivecs(p)?;
            if gt.len() == queries.len() && gt.iter().all(|r| r.len() >= k) {
                return Ok(gt);
            }
            return Err(Error::Format(format!("{} does not hold {k} neighbors for {} queries", p.display(), queries.len())));
        }
    }
    let gt = brute_force_knn_batch(base, queries, k, metric)?;
    if let Some(p) = cache {
        io::write_ivecs(p, &gt)?;
    }
    Ok(gt)
}

#[derive(Clone, Debug)]
pub struct BenchmarkSpec {
    pub routings: Vec<RoutingConfig>,
    pub efs: Vec<usize>,
    pub k: usize,
    pub repetitions: usize,
    pub routing_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub config: RoutingConfig,
    pub efs: usize,
    pub k: usize,
    pub recall: f64,
    pub qps: f64,
    /// Mean distance computations per query, entry descent included.
    pub dist_comps: f64,
    /// Passed tests over evaluated tests; 1 without routing.
    pub pass_frac: f64,
    pub wall_ms: f64,
}

pub struct QueryRun {
    pub ids: Vec<Vec<u32>>,
    pub stats: SearchStats,
    pub secs: f64,
}

pub fn run_queries(index: &HnswIndex, queries: &Dataset, params: SearchParams) -> Result<QueryRun> {
    let mut searcher = index.searcher(params)?;
    let mut ids = Vec::with_capacity(queries.len());
    let mut stats = SearchStats::default();
    let t = Instant::now();
    for q in queries.rows() {
        let (res, st) = searcher.search(q)?;
        ids.push(res.iter().map(|n: &Neighbor| n.id).collect());
        stats += st;
    }
    Ok(QueryRun { ids, stats, secs: t.elapsed().as_secs_f64() })
}

fn same_attachment(a: &RoutingConfig, b: &RoutingConfig) -> bool {
    a.mode == b.mode && a.parts == b.parts && a.m == b.m && a.compact == b.compact && a.simhash_bits == b.simhash_bits
}

/// Every routing configuration against every `efs`. Metadata is attached
/// once per distinct layout; each cell reports the median wall time of
/// `repetitions` passes over the queries.
pub fn run_sweep(index: &mut HnswIndex, queries: &Dataset, truth: &[Vec<u32>], spec: &BenchmarkSpec) -> Result<Vec<RunRow>> {
    if spec.repetitions == 0 {
        return Err(Error::Usage("repetitions must be positive".into()));
    }
    let mut rows = Vec::new();
    for cfg in &spec.routings {
        cfg.validate()?;
        if cfg.mode != RoutingMode::None && !index.routing_config().is_some_and(|c| same_attachment(&c, cfg)) {
            index.attach_routing(*cfg, spec.routing_seed)?;
        }
        for &efs in &spec.efs {
            let params = SearchParams::new(spec.k, efs, *cfg);
            let mut times = Vec::with_capacity(spec.repetitions);
            let mut last = None;
            for _ in 0..spec.repetitions {
                let run = run_queries(index, queries, params)?;
                times.push(run.secs);
                last = Some(run);
            }
            let run = last.unwrap();
            times.sort_by(f64::total_cmp);
            let secs = times[times.len() / 2];
            let nq = queries.len() as f64;
            let st = run.stats;
            rows.push(RunRow {
                config: *cfg,
                efs,
                k: spec.k,
                recall: compute_recall(&run.ids, truth, spec.k)?,
                qps: nq / secs.max(1e-12),
                dist_comps: st.total_dist_computations() as f64 / nq,
                pass_frac: if st.tests_evaluated == 0 { 1.0 } else { st.tests_passed as f64 / st.tests_evaluated as f64 },
                wall_ms: secs * 1e3,
            });
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: [&str; 12] =
    ["mode", "epsilon", "L", "m", "compact", "efs", "K", "recall", "qps", "dist_comps", "pass_frac", "wall_ms"];

fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = 6 - 1 - x.abs().log10().floor() as i32;
    let s = if digits > 0 { format!("{:.*}", digits as usize, x) } else { format!("{:.0}", x) };
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_csv<W: Write>(rows: &[RunRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Format(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        let c = &r.config;
        w.write_record([
            c.mode.name().to_string(),
            sig6(c.eps),
            c.parts.to_string(),
            c.m.to_string(),
            c.compact.to_string(),
            r.efs.to_string(),
            r.k.to_string(),
            sig6(r.recall),
            sig6(r.qps),
            sig6(r.dist_comps),
            sig6(r.pass_frac),
            sig6(r.wall_ms),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(format!("csv: {e}")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub evaluated: u64,
    /// Evaluated neighbors strictly closer than the current result boundary.
    pub true_positives: u64,
    pub tp_passed: u64,
    pub rate: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Slack allowed below `1 − ε` for sampling noise.
pub const AUDIT_SLACK: f64 = 0.02;

/// Runs gated search with shadow distances and measures how often neighbors
/// that would have entered the result list passed their test.
pub fn audit_guarantee(index: &HnswIndex, queries: &Dataset, config: RoutingConfig, k: usize, efs: usize) -> Result<AuditReport> {
    if config.mode == RoutingMode::None {
        return Err(Error::Usage("audit needs a routing mode".into()));
    }
    let mut searcher = index.searcher(SearchParams::new(k, efs, config))?;
    let (mut evaluated, mut tp, mut tp_passed) = (0u64, 0u64, 0u64);
    for q in queries.rows() {
        let mut obs = |e: &GateEvent| {
            evaluated += 1;
            if e.distance < e.delta {
                tp += 1;
                tp_passed += e.passed as u64;
            }
        };
        searcher.search_observed(q, &mut obs)?;
    }
    let rate = if tp == 0 { 1.0 } else { tp_passed as f64 / tp as f64 };
    let bound = 1.0 - config.eps - AUDIT_SLACK;
    Ok(AuditReport { evaluated, true_positives: tp, tp_passed, rate, bound, pass: tp > 0 && rate >= bound })
}
