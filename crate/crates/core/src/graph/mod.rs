//! HNSW graph with routing metadata on every directed base-layer edge.

mod brute;
mod build;
mod search;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::kernels;
use crate::projections::ProjectionEnsemble;
use crate::routing::{
    build_edge_meta, EdgeMeta, MetaLayout, MetaQuantizers, QuantileTable, RoutingConfig, RoutingMode, SimHashEnsemble,
    SimHashMeta, DEFAULT_COLUMNS,
};
use crate::vecstore::{build_permutation, normalize, Dataset, Metric, PermutationPlan};

pub use brute::{brute_force_knn, brute_force_knn_batch};
pub use search::{GateEvent, GateObserver, Neighbor, SearchParams, SearchStats, Searcher};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct HnswParams {
    /// Degree bound on the upper layers; the base layer allows `2M`.
    pub m: usize,
    pub efc: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self { m: 32, efc: 100, seed: 42 }
    }
}

impl HnswParams {
    pub fn max_degree(&self, level: usize) -> usize {
        if level == 0 {
            2 * self.m
        } else {
            self.m
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return invalid("M must be at least 2");
        }
        if self.efc < 1 {
            return invalid("efc must be positive");
        }
        Ok(())
    }
}

/// Routing metadata attached to an index. `records` holds one packed record
/// per directed base-layer edge, in adjacency order.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutingParts {
    pub config: RoutingConfig,
    pub seed: u64,
    pub quant: MetaQuantizers,
    pub records: Vec<u8>,
}

/// Everything an index consists of, laid out for serialization.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexParts {
    pub metric: Metric,
    pub dim: usize,
    pub params: HnswParams,
    /// Stored vectors: normalized for angular and permuted by `plan`.
    pub vectors: Vec<f32>,
    pub entry: u32,
    /// `upper[l - 1][node]` for levels `l ≥ 1`; empty for nodes below `l`.
    pub upper: Vec<Vec<Vec<u32>>>,
    /// Base layer in CSR form.
    pub base_offsets: Vec<u32>,
    pub base_ids: Vec<u32>,
    pub plan: Option<PermutationPlan>,
    pub routing: Option<RoutingParts>,
}

#[derive(Clone, Debug)]
pub(crate) enum Gates {
    Projections { ens: ProjectionEnsemble, layout: MetaLayout },
    SimHash { ens: SimHashEnsemble },
}

#[derive(Clone, Debug)]
pub(crate) struct Routing {
    pub parts: RoutingParts,
    pub gates: Gates,
    /// Table for the attach-time ε; searches at other ε build their own.
    pub table: Option<QuantileTable>,
}

#[derive(Clone, Debug)]
pub struct HnswIndex {
    metric: Metric,
    dim: usize,
    params: HnswParams,
    vectors: Vec<f32>,
    entry: u32,
    upper: Vec<Vec<Vec<u32>>>,
    base_offsets: Vec<u32>,
    base_ids: Vec<u32>,
    plan: Option<PermutationPlan>,
    routing: Option<Routing>,
}

impl HnswIndex {
    /// Builds the graph over `ds`. Angular datasets are normalized first.
    pub fn build(ds: &Dataset, metric: Metric, params: HnswParams) -> Result<Self> {
        params.validate()?;
        if ds.is_empty() {
            return Err(Error::InvalidDataset("cannot index an empty dataset"));
        }
        let vectors = match metric {
            Metric::Angular => ds.normalized()?.into_inner(),
            _ => ds.as_slice().to_vec(),
        };
        let g = build::Builder::new(&vectors, ds.dim(), metric, params).run();
        let (base_offsets, base_ids) = to_csr(&g.layers[0]);
        let upper = g.layers.into_iter().skip(1).collect();
        Ok(Self {
            metric,
            dim: ds.dim(),
            params,
            vectors,
            entry: g.entry,
            upper,
            base_offsets,
            base_ids,
            plan: None,
            routing: None,
        })
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn params(&self) -> HnswParams {
        self.params
    }

    pub fn entry(&self) -> u32 {
        self.entry
    }

    /// Number of layers including the base layer.
    pub fn levels(&self) -> usize {
        self.upper.len() + 1
    }

    pub fn plan(&self) -> Option<&PermutationPlan> {
        self.plan.as_ref()
    }

    pub fn routing_config(&self) -> Option<RoutingConfig> {
        self.routing.as_ref().map(|r| r.parts.config)
    }

    pub fn routing_seed(&self) -> Option<u64> {
        self.routing.as_ref().map(|r| r.parts.seed)
    }

    pub fn quantizers(&self) -> Option<&MetaQuantizers> {
        self.routing.as_ref().map(|r| &r.parts.quant)
    }

    pub fn projection_ensemble(&self) -> Option<&ProjectionEnsemble> {
        match &self.routing.as_ref()?.gates {
            Gates::Projections { ens, .. } => Some(ens),
            Gates::SimHash { .. } => None,
        }
    }

    pub fn simhash_ensemble(&self) -> Option<&SimHashEnsemble> {
        match &self.routing.as_ref()?.gates {
            Gates::SimHash { ens } => Some(ens),
            Gates::Projections { .. } => None,
        }
    }

    pub(crate) fn routing(&self) -> Option<&Routing> {
        self.routing.as_ref()
    }

    /// Stored (normalized, permuted) vector of node `i`.
    #[inline]
    pub fn vector(&self, i: u32) -> &[f32] {
        let i = i as usize;
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Out-neighbors of `i` on layer `level`.
    pub fn neighbors(&self, level: usize, i: u32) -> &[u32] {
        if level == 0 {
            let (a, b) = self.base_range(i);
            &self.base_ids[a..b]
        } else {
            self.upper[level - 1].get(i as usize).map_or(&[], |v| v.as_slice())
        }
    }

    #[inline]
    pub(crate) fn base_range(&self, i: u32) -> (usize, usize) {
        (self.base_offsets[i as usize] as usize, self.base_offsets[i as usize + 1] as usize)
    }

    /// Number of directed base-layer edges.
    pub fn base_edge_count(&self) -> usize {
        self.base_ids.len()
    }

    /// Packed routing record of base edge number `edge` (adjacency order).
    pub fn edge_record(&self, edge: usize) -> Option<&[u8]> {
        let r = self.routing.as_ref()?;
        let len = r.parts.config.layout()?.record_len();
        r.parts.records.get(edge * len..(edge + 1) * len)
    }

    /// Decoded PEOs record of the edge `v → u`, if attached and present.
    pub fn edge_meta(&self, v: u32, u: u32) -> Option<EdgeMeta> {
        let r = self.routing.as_ref()?;
        let Gates::Projections { layout, .. } = r.gates else {
            return None;
        };
        let (a, b) = self.base_range(v);
        let k = self.base_ids[a..b].iter().position(|&x| x == u)?;
        EdgeMeta::decode(self.edge_record(a + k)?, layout, r.parts.quant.grid).ok()
    }

    /// Query vector in stored coordinates: normalized for angular, permuted
    /// by the stored plan.
    pub fn prepare_query(&self, q: &[f32]) -> Result<Vec<f32>> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: q.len() });
        }
        let q = match self.metric {
            Metric::Angular => normalize(q)?,
            _ => q.to_vec(),
        };
        match &self.plan {
            Some(plan) => plan.apply(&q),
            None => Ok(q),
        }
    }

    /// Rearranges the stored coordinates so that each of `parts` contiguous
    /// blocks carries a similar share of the mean squared residual norm,
    /// estimated over all base-layer edges. Queries are rearranged the same
    /// way at search time. Drops attached routing, which must be re-attached.
    pub fn permute_dimensions(&mut self, parts: usize) -> Result<&PermutationPlan> {
        if parts == 0 || self.dim % parts != 0 {
            return invalid(alloc::format!("dimension {} is not divisible by L={parts}", self.dim));
        }
        let mut sums = vec![0.0f64; self.dim];
        let mut count = 0usize;
        for v in 0..self.len() as u32 {
            let vv = self.vector(v);
            for &u in self.neighbors(0, v) {
                for ((s, &a), &b) in sums.iter_mut().zip(self.vector(u)).zip(vv) {
                    let e = (a - b) as f64;
                    *s += e * e;
                }
                count += 1;
            }
        }
        let avgs: Vec<f64> = if count == 0 {
            vec![0.0; self.dim]
        } else {
            sums.iter().map(|s| s / count as f64).collect()
        };
        let step = build_permutation(&avgs, parts)?;
        // compose with an existing plan so queries are rearranged once
        let plan = match self.plan.take() {
            Some(prev) => {
                let order = step.order().iter().map(|&p| prev.order()[p as usize]).collect();
                PermutationPlan::from_order(order, parts)?
            }
            None => step.clone(),
        };
        let mut buf = vec![0.0f32; self.dim];
        for row in self.vectors.chunks_exact_mut(self.dim) {
            step.apply_into(row, &mut buf)?;
            row.copy_from_slice(&buf);
        }
        self.routing = None;
        Ok(self.plan.insert(plan))
    }

    /// Computes routing metadata for every directed base-layer edge. The
    /// projection (or hash) ensemble is generated from `seed` and can always
    /// be regenerated from it.
    pub fn attach_routing(&mut self, config: RoutingConfig, seed: u64) -> Result<()> {
        config.validate()?;
        let Some(layout) = config.layout() else {
            self.routing = None;
            return Ok(());
        };
        if let MetaLayout::Peos { parts, .. } = layout {
            if self.dim % parts != 0 {
                return invalid(alloc::format!("dimension {} is not divisible by L={parts}", self.dim));
            }
        }
        let quant = self.fit_quantizers(layout, config.parts)?;
        let gates = match config.mode {
            RoutingMode::SimHash => Gates::SimHash { ens: SimHashEnsemble::generate(seed, self.dim, config.simhash_bits)? },
            _ => Gates::Projections { ens: ProjectionEnsemble::generate(seed, self.dim, config.parts, config.m)?, layout },
        };
        let mut records = Vec::with_capacity(self.base_ids.len() * layout.record_len());
        let mut scratch = Vec::new();
        for v in 0..self.len() as u32 {
            let (a, b) = self.base_range(v);
            for &u in &self.base_ids[a..b] {
                scratch.clear();
                self.edge_record_into(&gates, &quant, config.compact, u, v, &mut scratch)?;
                records.extend_from_slice(&scratch);
            }
        }
        let parts = RoutingParts { config, seed, quant, records };
        let table = table_for(&parts.config)?;
        self.routing = Some(Routing { parts, gates, table });
        Ok(())
    }

    fn fit_quantizers(&self, layout: MetaLayout, parts: usize) -> Result<MetaQuantizers> {
        let half_u = (0..self.len() as u32).map(|i| 0.5 * kernels::norm_sq(self.vector(i)));
        let enorms = (0..self.len() as u32).flat_map(|v| {
            let vv = self.vector(v);
            self.neighbors(0, v).iter().map(move |&u| libm::sqrtf(kernels::l2_sq(self.vector(u), vv)))
        });
        MetaQuantizers::fit(half_u, enorms, layout, parts)
    }

    fn edge_record_into(
        &self,
        gates: &Gates,
        quant: &MetaQuantizers,
        compact: bool,
        u: u32,
        v: u32,
        out: &mut Vec<u8>,
    ) -> Result<()> {
        let (uu, vv) = (self.vector(u), self.vector(v));
        match gates {
            Gates::Projections { ens, layout } => match build_edge_meta(uu, vv, ens, None, quant, compact) {
                Ok(m) => m.encode(out),
                Err(Error::Degenerate(_)) => {
                    let MetaLayout::Peos { parts, .. } = *layout else { unreachable!() };
                    let half_u = quant.half_u.encode(0.5 * kernels::norm_sq(uu), crate::routing::Rounding::Down);
                    EdgeMeta::degenerate(parts, compact, half_u as u16).encode(out);
                }
                Err(e) => return Err(e),
            },
            Gates::SimHash { ens } => SimHashMeta::build(uu, vv, ens, quant)?.encode(out),
        }
        Ok(())
    }

    /// Recomputes the record of edge `v → u` from scratch with the attached
    /// ensemble and quantizers.
    pub fn recompute_edge_record(&self, v: u32, u: u32) -> Result<Vec<u8>> {
        let r = self.routing.as_ref().ok_or(Error::InvalidParameter("no routing attached".into()))?;
        let mut out = Vec::new();
        self.edge_record_into(&r.gates, &r.parts.quant, r.parts.config.compact, u, v, &mut out)?;
        Ok(out)
    }

    pub fn to_parts(&self) -> IndexParts {
        IndexParts {
            metric: self.metric,
            dim: self.dim,
            params: self.params,
            vectors: self.vectors.clone(),
            entry: self.entry,
            upper: self.upper.clone(),
            base_offsets: self.base_offsets.clone(),
            base_ids: self.base_ids.clone(),
            plan: self.plan.clone(),
            routing: self.routing.as_ref().map(|r| r.parts.clone()),
        }
    }

    /// Reassembles an index, validating its structure and regenerating the
    /// routing ensembles from the stored seed.
    pub fn from_parts(p: IndexParts) -> Result<Self> {
        p.params.validate()?;
        if p.dim == 0 || p.vectors.len() % p.dim != 0 || p.vectors.is_empty() {
            return Err(Error::InvalidDataset("vector block does not match the dimension"));
        }
        let n = p.vectors.len() / p.dim;
        if p.base_offsets.len() != n + 1
            || p.base_offsets[0] != 0
            || p.base_offsets.windows(2).any(|w| w[0] > w[1])
            || *p.base_offsets.last().unwrap() as usize != p.base_ids.len()
        {
            return Err(Error::InvalidDataset("malformed base-layer offsets"));
        }
        let in_range = |ids: &[u32]| ids.iter().all(|&x| (x as usize) < n);
        if (p.entry as usize) >= n
            || !in_range(&p.base_ids)
            || p.upper.iter().any(|l| l.len() != n || l.iter().any(|a| !in_range(a)))
        {
            return Err(Error::InvalidDataset("node id out of range"));
        }
        if let Some(plan) = &p.plan {
            if plan.dim() != p.dim {
                return Err(Error::DimensionMismatch { expected: p.dim, got: plan.dim() });
            }
        }
        let routing = match p.routing {
            None => None,
            Some(parts) => {
                let cfg = parts.config;
                cfg.validate()?;
                let layout = cfg.layout().ok_or(Error::InvalidDataset("routing mode without metadata"))?;
                if parts.records.len() != p.base_ids.len() * layout.record_len() {
                    return Err(Error::InvalidDataset("routing records do not match the edge count"));
                }
                let gates = match cfg.mode {
                    RoutingMode::SimHash => Gates::SimHash { ens: SimHashEnsemble::generate(parts.seed, p.dim, cfg.simhash_bits)? },
                    _ => Gates::Projections { ens: ProjectionEnsemble::generate(parts.seed, p.dim, cfg.parts, cfg.m)?, layout },
                };
                let table = table_for(&cfg)?;
                Some(Routing { parts, gates, table })
            }
        };
        Ok(Self {
            metric: p.metric,
            dim: p.dim,
            params: p.params,
            vectors: p.vectors,
            entry: p.entry,
            upper: p.upper,
            base_offsets: p.base_offsets,
            base_ids: p.base_ids,
            plan: p.plan,
            routing,
        })
    }

    /// Nodes reachable from the entry point on the base layer.
    pub fn reachable_count(&self) -> usize {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![self.entry];
        seen[self.entry as usize] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &u in self.neighbors(0, v) {
                if !seen[u as usize] {
                    seen[u as usize] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count
    }

    pub fn searcher(&self, params: SearchParams) -> Result<Searcher<'_>> {
        Searcher::new(self, params)
    }

    /// One-off search. Builds a fresh [`Searcher`]; reuse one for many queries.
    pub fn search(&self, q: &[f32], params: SearchParams) -> Result<(Vec<Neighbor>, SearchStats)> {
        self.searcher(params)?.search(q)
    }

    /// Plain HNSW search with no routing tests at all.
    pub fn search_vanilla(&self, q: &[f32], k: usize, efs: usize) -> Result<Vec<Neighbor>> {
        search::vanilla(self, q, k, efs)
    }
}

fn table_for(cfg: &RoutingConfig) -> Result<Option<QuantileTable>> {
    Ok(match cfg.mode {
        RoutingMode::Peos => Some(QuantileTable::build(cfg.eps, cfg.parts, cfg.m, DEFAULT_COLUMNS)?),
        RoutingMode::Rceos => Some(QuantileTable::build(cfg.eps, 1, cfg.m, DEFAULT_COLUMNS)?),
        _ => None,
    })
}

fn to_csr(adj: &[Vec<u32>]) -> (Vec<u32>, Vec<u32>) {
    let mut offsets = Vec::with_capacity(adj.len() + 1);
    let mut ids = Vec::with_capacity(adj.iter().map(Vec::len).sum());
    offsets.push(0);
    for a in adj {
        ids.extend_from_slice(a);
        offsets.push(ids.len() as u32);
    }
    (offsets, ids)
}
