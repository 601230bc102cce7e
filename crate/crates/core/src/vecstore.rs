//! Datasets, metrics, normalization and the subspace-balancing dimension
//! permutation.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::kernels;

/// Distance function of an index. All three share one ordering contract:
/// smaller is better.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    L2,
    /// `1 - cos`. Indexes store unit vectors for this metric.
    Angular,
    /// Negated inner product. Supported by the routing thresholds only; the
    /// graph construction treats it like any other dissimilarity.
    Ip,
}

impl Metric {
    pub fn code(self) -> u8 {
        match self {
            Metric::L2 => 0,
            Metric::Angular => 1,
            Metric::Ip => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Metric::L2),
            1 => Some(Metric::Angular),
            2 => Some(Metric::Ip),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::L2 => "l2",
            Metric::Angular => "angular",
            Metric::Ip => "ip",
        }
    }

    /// Ordering key used inside the index: squared distance for L2, and the
    /// plain distance otherwise. Angular assumes both inputs are unit vectors.
    #[inline]
    pub(crate) fn score(self, a: &[f32], b: &[f32]) -> f32 {
        match self {
            Metric::L2 => kernels::l2_sq(a, b),
            Metric::Angular => 1.0 - kernels::dot(a, b),
            Metric::Ip => -kernels::dot(a, b),
        }
    }

    #[inline]
    pub(crate) fn score_to_distance(self, score: f32) -> f32 {
        match self {
            Metric::L2 => libm::sqrtf(score.max(0.0)),
            _ => score,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "euclidean" => Ok(Metric::L2),
            "angular" | "cosine" => Ok(Metric::Angular),
            "ip" | "mips" => Ok(Metric::Ip),
            other => invalid(alloc::format!("unknown metric `{other}`")),
        }
    }
}

/// Row-major `n × d` matrix of finite f32 values. Row ids are `0..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    data: Vec<f32>,
    dim: usize,
}

impl Dataset {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDataset("dimension must be at least 1"));
        }
        if data.is_empty() {
            return Err(Error::InvalidDataset("dataset must contain at least one vector"));
        }
        if data.len() % dim != 0 {
            return Err(Error::InvalidDataset("data length is not a multiple of the dimension"));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidDataset("non-finite component"));
        }
        Ok(Self { data, dim })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.data
    }

    /// Every row scaled to unit norm.
    pub fn normalized(&self) -> Result<Self> {
        let mut data = Vec::with_capacity(self.data.len());
        for r in self.rows() {
            data.extend(normalize(r)?);
        }
        Ok(Self { data, dim: self.dim })
    }

    /// Every row rearranged by `plan`.
    pub fn permuted(&self, plan: &PermutationPlan) -> Result<Self> {
        let mut data = vec![0.0; self.data.len()];
        for (src, dst) in self.rows().zip(data.chunks_exact_mut(self.dim)) {
            plan.apply_into(src, dst)?;
        }
        Ok(Self { data, dim: self.dim })
    }
}

/// Distance between two vectors under `metric` (L2 is the Euclidean distance,
/// not its square).
pub fn distance(a: &[f32], b: &[f32], metric: Metric) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    Ok(match metric {
        Metric::L2 => libm::sqrtf(kernels::l2_sq(a, b)),
        Metric::Angular => {
            let den = kernels::norm_f64(a) * kernels::norm_f64(b);
            if den == 0.0 {
                return Err(Error::Degenerate("angular distance of a zero vector"));
            }
            (1.0 - kernels::dot_f64(a, b) / den) as f32
        }
        Metric::Ip => -kernels::dot(a, b),
    })
}

pub fn normalize(q: &[f32]) -> Result<Vec<f32>> {
    let n = kernels::norm_f64(q);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Degenerate("cannot normalize a zero vector"));
    }
    Ok(q.iter().map(|&x| (x as f64 / n) as f32).collect())
}

/// Mean of the squared `j`-th coordinate over a collection of residual vectors.
pub fn avg_squared_coordinate<'a, I>(edges: I, j: usize) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f32]>,
{
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for e in edges {
        let x = *e.get(j).ok_or(Error::DimensionMismatch { expected: j + 1, got: e.len() })? as f64;
        sum += x * x;
        count += 1;
    }
    if count == 0 {
        return invalid("average over an empty edge collection");
    }
    Ok(sum / count as f64)
}

/// Per-dimension [`avg_squared_coordinate`] in one pass.
pub fn avg_squared_coordinates<'a, I>(edges: I, dim: usize) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f32]>,
{
    let mut sums = vec![0.0f64; dim];
    let mut count = 0usize;
    for e in edges {
        if e.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: e.len() });
        }
        for (s, &x) in sums.iter_mut().zip(e) {
            *s += x as f64 * x as f64;
        }
        count += 1;
    }
    if count == 0 {
        return invalid("average over an empty edge collection");
    }
    for s in &mut sums {
        *s /= count as f64;
    }
    Ok(sums)
}

/// Assignment of the `d` coordinates to `parts` contiguous subspaces of width
/// `d / parts`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationPlan {
    /// `order[k]` is the original dimension stored at permuted position `k`.
    order: Vec<u32>,
    /// Subspace (0-based) that each original dimension belongs to.
    subspace_of: Vec<u16>,
    parts: usize,
}

impl PermutationPlan {
    pub fn identity(dim: usize, parts: usize) -> Result<Self> {
        check_partition(dim, parts)?;
        let width = dim / parts;
        Ok(Self {
            order: (0..dim as u32).collect(),
            subspace_of: (0..dim).map(|j| (j / width) as u16).collect(),
            parts,
        })
    }

    /// Rebuilds a plan from its stored `order`.
    pub fn from_order(order: Vec<u32>, parts: usize) -> Result<Self> {
        let dim = order.len();
        check_partition(dim, parts)?;
        let width = dim / parts;
        let mut subspace_of = vec![u16::MAX; dim];
        for (k, &j) in order.iter().enumerate() {
            let slot = subspace_of
                .get_mut(j as usize)
                .ok_or_else(|| Error::InvalidParameter("permutation index out of range".into()))?;
            if *slot != u16::MAX {
                return invalid("permutation is not a bijection");
            }
            *slot = (k / width) as u16;
        }
        Ok(Self { order, subspace_of, parts })
    }

    pub fn dim(&self) -> usize {
        self.order.len()
    }

    pub fn parts(&self) -> usize {
        self.parts
    }

    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn subspace_of(&self, dim: usize) -> usize {
        self.subspace_of[dim] as usize
    }

    pub fn is_identity(&self) -> bool {
        self.order.iter().enumerate().all(|(k, &j)| k == j as usize)
    }

    /// Original dimensions in subspace `i`, in their permuted order.
    pub fn members(&self, i: usize) -> &[u32] {
        let width = self.dim() / self.parts;
        &self.order[i * width..(i + 1) * width]
    }

    pub fn apply(&self, x: &[f32]) -> Result<Vec<f32>> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, x: &[f32], out: &mut [f32]) -> Result<()> {
        if x.len() != self.dim() || out.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        for (o, &j) in out.iter_mut().zip(&self.order) {
            *o = x[j as usize];
        }
        Ok(())
    }

    /// Inverse of [`apply`](Self::apply).
    pub fn invert(&self, y: &[f32]) -> Result<Vec<f32>> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: y.len() });
        }
        let mut out = vec![0.0; y.len()];
        for (&v, &j) in y.iter().zip(&self.order) {
            out[j as usize] = v;
        }
        Ok(out)
    }
}

fn check_partition(dim: usize, parts: usize) -> Result<()> {
    if parts == 0 || dim == 0 {
        return invalid("dimension and partition count must be positive");
    }
    if dim % parts != 0 {
        return invalid(alloc::format!("dimension {dim} is not divisible by L={parts}"));
    }
    if parts > u16::MAX as usize {
        return invalid("too many partitions");
    }
    Ok(())
}

/// Greedy balancing of per-dimension mean squared residual coordinates across
/// `parts` subspaces.
///
/// Dimensions are ranked by ascending `avgs` (ties by lower dimension). In
/// round `l` the ranks `l*parts .. (l+1)*parts` are dealt one per subspace, each
/// to the subspace not yet served this round whose running sum is greatest
/// (ties by lower subspace index).
pub fn build_permutation(avgs: &[f64], parts: usize) -> Result<PermutationPlan> {
    let dim = avgs.len();
    check_partition(dim, parts)?;
    if avgs.iter().any(|a| !a.is_finite()) {
        return invalid("non-finite coordinate average");
    }
    let width = dim / parts;
    let mut ranked: Vec<usize> = (0..dim).collect();
    ranked.sort_by(|&a, &b| avgs[a].total_cmp(&avgs[b]).then(a.cmp(&b)));

    let mut sums = vec![0.0f64; parts];
    let mut blocks: Vec<Vec<u32>> = vec![Vec::with_capacity(width); parts];
    let mut served = vec![false; parts];
    for round in ranked.chunks_exact(parts) {
        served.iter_mut().for_each(|s| *s = false);
        for &j in round {
            let mut best = usize::MAX;
            for i in 0..parts {
                if !served[i] && (best == usize::MAX || sums[i] > sums[best]) {
                    best = i;
                }
            }
            served[best] = true;
            sums[best] += avgs[j];
            blocks[best].push(j as u32);
        }
    }
    let order: Vec<u32> = blocks.into_iter().flatten().collect();
    PermutationPlan::from_order(order, parts)
}

pub fn apply_permutation(x: &[f32], plan: &PermutationPlan) -> Result<Vec<f32>> {
    plan.apply(x)
}
