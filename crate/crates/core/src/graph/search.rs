//! Best-first base-layer search gated by routing tests.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};
use core::ops::AddAssign;

use super::{Gates, HnswIndex};
use crate::error::{invalid, Error, Result};
use crate::kernels;
use crate::projections::project_query;
use crate::routing::{
    PeosEvaluator, QuantileTable, RoutingConfig, RoutingMode, SimHashEvaluator, SimHashSketch, TestOutcome,
    ThresholdState, DEFAULT_COLUMNS,
};

/// Heap entry ordered by `(score, id)`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub(crate) struct Cand {
    pub score: f32,
    pub id: u32,
}

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub distance: f32,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SearchParams {
    pub k: usize,
    /// Result-list capacity, at least `k`.
    pub efs: usize,
    pub routing: RoutingConfig,
}

impl SearchParams {
    pub fn new(k: usize, efs: usize, routing: RoutingConfig) -> Self {
        Self { k, efs, routing }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.efs < self.k {
            return invalid(alloc::format!("need efs >= K >= 1, got K={} efs={}", self.k, self.efs));
        }
        self.routing.validate()
    }
}

/// Per-query counters. `dist_computations` counts exact distances to
/// base-layer neighbors; the entry descent is counted separately.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub dist_computations: u64,
    pub tests_evaluated: u64,
    pub tests_passed: u64,
    pub hops: u64,
    /// Neighbors evaluated while the result list was not yet full, so no
    /// test could be run.
    pub unbounded_expansions: u64,
    pub entry_dist_computations: u64,
    /// `vᵀq` products of expanded nodes, needed by the tests.
    pub inner_products: u64,
}

impl SearchStats {
    pub fn total_dist_computations(&self) -> u64 {
        self.dist_computations + self.entry_dist_computations
    }
}

impl AddAssign for SearchStats {
    fn add_assign(&mut self, o: Self) {
        self.dist_computations += o.dist_computations;
        self.tests_evaluated += o.tests_evaluated;
        self.tests_passed += o.tests_passed;
        self.hops += o.hops;
        self.unbounded_expansions += o.unbounded_expansions;
        self.entry_dist_computations += o.entry_dist_computations;
        self.inner_products += o.inner_products;
    }
}

/// One routing decision seen during search, with the exact distance of the
/// neighbor computed on the side.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct GateEvent {
    pub node: u32,
    pub neighbor: u32,
    pub passed: bool,
    pub distance: f32,
    /// Distance of the furthest element of the full result list.
    pub delta: f32,
}

/// Receives every gated decision. Observing never changes the search.
pub trait GateObserver {
    fn observe(&mut self, event: &GateEvent);
}

impl<F: FnMut(&GateEvent)> GateObserver for F {
    fn observe(&mut self, event: &GateEvent) {
        self(event)
    }
}

enum QueryGate<'s> {
    Open,
    Peos(PeosEvaluator<'s>),
    SimHash(SimHashEvaluator<'s>),
}

impl QueryGate<'_> {
    #[inline]
    fn eval(&self, rec: &[u8], ts: &ThresholdState) -> TestOutcome {
        match self {
            QueryGate::Open => TestOutcome::Pass,
            QueryGate::Peos(ev) => ev.eval(rec, ts),
            QueryGate::SimHash(ev) => ev.eval(rec, ts),
        }
    }
}

/// Reusable per-thread search state for one index and parameter set.
pub struct Searcher<'a> {
    index: &'a HnswIndex,
    params: SearchParams,
    table: Option<QuantileTable>,
    visited: Vec<u32>,
    epoch: u32,
    cand: BinaryHeap<Reverse<Cand>>,
    res: BinaryHeap<Cand>,
}

impl<'a> Searcher<'a> {
    pub fn new(index: &'a HnswIndex, params: SearchParams) -> Result<Self> {
        params.validate()?;
        let cfg = params.routing;
        let table = if cfg.mode == RoutingMode::None {
            None
        } else {
            let attached = index.routing().ok_or(Error::InvalidParameter("index has no routing metadata".into()))?;
            let a = attached.parts.config;
            let same = a.mode == cfg.mode
                && match cfg.mode {
                    RoutingMode::SimHash => a.simhash_bits == cfg.simhash_bits,
                    _ => a.parts == cfg.parts && a.m == cfg.m && a.compact == cfg.compact,
                };
            if !same {
                return invalid(alloc::format!("search routing {cfg:?} does not match attached {a:?}"));
            }
            match cfg.mode {
                RoutingMode::SimHash => None,
                _ if cfg.eps == a.eps => attached.table.clone(),
                RoutingMode::Rceos => Some(QuantileTable::build(cfg.eps, 1, cfg.m, DEFAULT_COLUMNS)?),
                _ => Some(QuantileTable::build(cfg.eps, cfg.parts, cfg.m, DEFAULT_COLUMNS)?),
            }
        };
        Ok(Self {
            index,
            params,
            table,
            visited: vec![0; index.len()],
            epoch: 0,
            cand: BinaryHeap::new(),
            res: BinaryHeap::new(),
        })
    }

    pub fn params(&self) -> SearchParams {
        self.params
    }

    pub fn search(&mut self, q: &[f32]) -> Result<(Vec<Neighbor>, SearchStats)> {
        self.run(q, None)
    }

    /// Like [`Searcher::search`], reporting every gated decision to `obs`.
    pub fn search_observed(
        &mut self,
        q: &[f32],
        obs: &mut dyn GateObserver,
    ) -> Result<(Vec<Neighbor>, SearchStats)> {
        self.run(q, Some(obs))
    }

    fn next_epoch(&mut self) -> u32 {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.visited.fill(0);
            self.epoch = 1;
        }
        self.epoch
    }

    fn run(&mut self, q: &[f32], mut obs: Option<&mut dyn GateObserver>) -> Result<(Vec<Neighbor>, SearchStats)> {
        let idx = self.index;
        let metric = idx.metric();
        let qv = idx.prepare_query(q)?;
        let mut stats = SearchStats::default();
        let epoch = self.next_epoch();
        let start = descend(idx, &qv, &mut stats.entry_dist_computations);

        let qnorm = kernels::norm(&qv);
        let gated = self.params.routing.mode != RoutingMode::None && qnorm > 0.0;
        let routing = idx.routing();
        let qpt;
        let sketch;
        let gate = match (gated, routing.map(|r| &r.gates)) {
            (true, Some(Gates::Projections { ens, layout })) => {
                qpt = project_query(&qv, ens)?;
                let quant = &routing.unwrap().parts.quant;
                QueryGate::Peos(PeosEvaluator::new(*layout, self.table.as_ref().unwrap(), &qpt, quant))
            }
            (true, Some(Gates::SimHash { ens })) => {
                sketch = SimHashSketch::new(&qv, ens)?;
                QueryGate::SimHash(SimHashEvaluator::new(&sketch, &routing.unwrap().parts.quant, self.params.routing.eps))
            }
            _ => QueryGate::Open,
        };
        let rec_len = match (&gate, routing.and_then(|r| r.parts.config.layout())) {
            (QueryGate::Open, _) | (_, None) => 0,
            (_, Some(l)) => l.record_len(),
        };
        let records: &[u8] = routing.map_or(&[], |r| &r.parts.records);
        let mut ts = ThresholdState::new(metric, qnorm);

        let efs = self.params.efs;
        self.cand.clear();
        self.res.clear();
        self.visited[start.id as usize] = epoch;
        self.cand.push(Reverse(start));
        self.res.push(start);

        while let Some(Reverse(c)) = self.cand.pop() {
            if self.res.len() >= efs && c.score > self.res.peek().unwrap().score {
                break;
            }
            stats.hops += 1;
            if rec_len > 0 {
                ts.vq = kernels::dot(idx.vector(c.id), &qv);
                stats.inner_products += 1;
            }
            let (a, b) = idx.base_range(c.id);
            for e in a..b {
                let u = idx.base_ids[e];
                if self.visited[u as usize] == epoch {
                    continue;
                }
                if self.res.len() < efs {
                    stats.unbounded_expansions += 1;
                } else {
                    let worst = self.res.peek().unwrap().score;
                    let outcome = if rec_len > 0 {
                        ts.set_score(worst);
                        gate.eval(&records[e * rec_len..(e + 1) * rec_len], &ts)
                    } else {
                        TestOutcome::Pass
                    };
                    stats.tests_evaluated += 1;
                    if let Some(o) = obs.as_deref_mut() {
                        let d = metric.score_to_distance(metric.score(&qv, idx.vector(u)));
                        o.observe(&GateEvent {
                            node: c.id,
                            neighbor: u,
                            passed: outcome.passed(),
                            distance: d,
                            delta: metric.score_to_distance(worst),
                        });
                    }
                    if !outcome.passed() {
                        continue;
                    }
                    stats.tests_passed += 1;
                }
                self.visited[u as usize] = epoch;
                stats.dist_computations += 1;
                let x = Cand { score: metric.score(&qv, idx.vector(u)), id: u };
                if self.res.len() < efs || x < *self.res.peek().unwrap() {
                    self.cand.push(Reverse(x));
                    self.res.push(x);
                    if self.res.len() > efs {
                        self.res.pop();
                    }
                }
            }
        }
        Ok((finish(&mut self.res, self.params.k, metric), stats))
    }
}

/// Greedy descent through the upper layers to a base-layer entry point.
fn descend(idx: &HnswIndex, qv: &[f32], count: &mut u64) -> Cand {
    let metric = idx.metric();
    let mut cur = Cand { score: metric.score(qv, idx.vector(idx.entry())), id: idx.entry() };
    *count += 1;
    for l in (1..idx.levels()).rev() {
        loop {
            let mut moved = false;
            for &u in idx.neighbors(l, cur.id) {
                let c = Cand { score: metric.score(qv, idx.vector(u)), id: u };
                *count += 1;
                if c < cur {
                    cur = c;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
    }
    cur
}

fn finish(res: &mut BinaryHeap<Cand>, k: usize, metric: crate::vecstore::Metric) -> Vec<Neighbor> {
    let mut all = core::mem::take(res).into_sorted_vec();
    all.truncate(k);
    all.into_iter().map(|c| Neighbor { id: c.id, distance: metric.score_to_distance(c.score) }).collect()
}

/// Textbook HNSW search, written independently of [`Searcher`].
pub(super) fn vanilla(idx: &HnswIndex, q: &[f32], k: usize, efs: usize) -> Result<Vec<Neighbor>> {
    if k == 0 || efs < k {
        return invalid("need efs >= K >= 1");
    }
    let qv = idx.prepare_query(q)?;
    let metric = idx.metric();
    let mut n = 0;
    let ep = descend(idx, &qv, &mut n);
    let mut seen = vec![false; idx.len()];
    seen[ep.id as usize] = true;
    let mut frontier = BinaryHeap::from([Reverse(ep)]);
    let mut best = BinaryHeap::from([ep]);
    while let Some(Reverse(c)) = frontier.pop() {
        let bound = *best.peek().unwrap();
        if best.len() >= efs && c.score > bound.score {
            break;
        }
        for &u in idx.neighbors(0, c.id) {
            if core::mem::replace(&mut seen[u as usize], true) {
                continue;
            }
            let x = Cand { score: metric.score(&qv, idx.vector(u)), id: u };
            if best.len() < efs || x < *best.peek().unwrap() {
                frontier.push(Reverse(x));
                best.push(x);
                if best.len() > efs {
                    best.pop();
                }
            }
        }
    }
    Ok(finish(&mut best, k, metric))
}
