//! Single-threaded HNSW construction.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use super::search::Cand;
use super::HnswParams;
use crate::rng::{stream, SeededStream};
use crate::vecstore::Metric;

const MAX_LEVEL: usize = 16;

pub(super) struct Graph {
    /// `layers[l][node]`, every layer sized to all nodes.
    pub layers: Vec<Vec<Vec<u32>>>,
    pub entry: u32,
}

pub(super) struct Builder<'a> {
    data: &'a [f32],
    dim: usize,
    metric: Metric,
    params: HnswParams,
    layers: Vec<Vec<Vec<u32>>>,
    visited: Vec<u32>,
    epoch: u32,
}

impl<'a> Builder<'a> {
    pub fn new(data: &'a [f32], dim: usize, metric: Metric, params: HnswParams) -> Self {
        let n = data.len() / dim;
        Self { data, dim, metric, params, layers: vec![vec![Vec::new(); n]], visited: vec![0; n], epoch: 0 }
    }

    fn n(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    fn row(&self, i: u32) -> &'a [f32] {
        let i = i as usize;
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    fn score(&self, a: u32, b: u32) -> f32 {
        self.metric.score(self.row(a), self.row(b))
    }

    pub fn run(mut self) -> Graph {
        let n = self.n();
        let ml = 1.0 / libm::log(self.params.m as f64);
        let mut rng = SeededStream::new(self.params.seed, stream::LEVELS);
        let mut entry = 0u32;
        let mut top = 0usize;
        for i in 0..n as u32 {
            let level = ((-libm::log(rng.uniform()) * ml) as usize).min(MAX_LEVEL);
            while self.layers.len() <= level {
                self.layers.push(vec![Vec::new(); n]);
            }
            if i == 0 {
                top = level;
                continue;
            }
            self.insert(i, level, entry, top);
            if level > top {
                top = level;
                entry = i;
            }
        }
        self.layers.truncate(top + 1);
        self.repair(entry);
        Graph { layers: self.layers, entry }
    }

    fn insert(&mut self, q: u32, level: usize, entry: u32, top: usize) {
        let mut cur = Cand { score: self.score(q, entry), id: entry };
        for l in (level + 1..=top).rev() {
            cur = self.greedy(q, cur, l);
        }
        let mut eps = vec![cur];
        for l in (0..=level.min(top)).rev() {
            let found = self.search_layer(self.row(q), &eps, self.params.efc, l);
            let chosen = self.select(&found, self.params.m);
            for &nb in &chosen {
                self.link(nb, q, l);
            }
            self.layers[l][q as usize] = chosen;
            eps = found;
        }
    }

    fn greedy(&self, q: u32, mut cur: Cand, level: usize) -> Cand {
        loop {
            let mut moved = false;
            for &u in &self.layers[level][cur.id as usize] {
                let c = Cand { score: self.score(q, u), id: u };
                if c < cur {
                    cur = c;
                    moved = true;
                }
            }
            if !moved {
                return cur;
            }
        }
    }

    /// Beam search on one layer; result sorted ascending.
    fn search_layer(&mut self, q: &[f32], eps: &[Cand], ef: usize, level: usize) -> Vec<Cand> {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.visited.fill(0);
            self.epoch = 1;
        }
        let mut cand = BinaryHeap::new();
        let mut res: BinaryHeap<Cand> = BinaryHeap::new();
        for &e in eps {
            self.visited[e.id as usize] = self.epoch;
            cand.push(Reverse(e));
            res.push(e);
        }
        while res.len() > ef {
            res.pop();
        }
        while let Some(Reverse(c)) = cand.pop() {
            if res.len() >= ef && c.score > res.peek().unwrap().score {
                break;
            }
            for &u in &self.layers[level][c.id as usize] {
                if self.visited[u as usize] == self.epoch {
                    continue;
                }
                self.visited[u as usize] = self.epoch;
                let x = Cand { score: self.metric.score(q, self.row(u)), id: u };
                if res.len() < ef || x < *res.peek().unwrap() {
                    cand.push(Reverse(x));
                    res.push(x);
                    if res.len() > ef {
                        res.pop();
                    }
                }
            }
        }
        res.into_sorted_vec()
    }

    /// Neighbor-selection heuristic: keep a candidate only if it is closer to
    /// the base point than to every neighbor already kept.
    fn select(&self, sorted: &[Cand], m: usize) -> Vec<u32> {
        let mut out: Vec<u32> = Vec::with_capacity(m);
        for c in sorted {
            if out.len() >= m {
                break;
            }
            if out.iter().all(|&r| self.score(c.id, r) >= c.score) {
                out.push(c.id);
            }
        }
        out
    }

    fn link(&mut self, from: u32, to: u32, level: usize) {
        let cap = self.params.max_degree(level);
        let adj = &self.layers[level][from as usize];
        if adj.len() < cap {
            self.layers[level][from as usize].push(to);
            return;
        }
        let mut cands: Vec<Cand> =
            adj.iter().chain(core::iter::once(&to)).map(|&u| Cand { score: self.score(from, u), id: u }).collect();
        cands.sort_unstable();
        let kept = self.select(&cands, cap);
        self.layers[level][from as usize] = kept;
    }

    fn reachable(&self, entry: u32) -> Vec<bool> {
        let mut seen = vec![false; self.n()];
        let mut stack = vec![entry];
        seen[entry as usize] = true;
        while let Some(v) = stack.pop() {
            for &u in &self.layers[0][v as usize] {
                if !seen[u as usize] {
                    seen[u as usize] = true;
                    stack.push(u);
                }
            }
        }
        seen
    }

    /// Links every base-layer node that pruning cut off from the entry point
    /// back in, from its nearest reachable node with spare degree.
    fn repair(&mut self, entry: u32) {
        let cap = self.params.max_degree(0);
        for _ in 0..8 {
            let seen = self.reachable(entry);
            let lost: Vec<u32> = (0..self.n() as u32).filter(|&i| !seen[i as usize]).collect();
            if lost.is_empty() {
                return;
            }
            for u in lost {
                let start = [Cand { score: self.score(u, entry), id: entry }];
                let found = self.search_layer(self.row(u), &start, self.params.efc.max(cap), 0);
                let near = found.iter().filter(|c| c.id != u);
                let host = near.clone().find(|c| self.layers[0][c.id as usize].len() < cap).or_else(|| near.clone().next());
                let Some(host) = host.map(|c| c.id) else { continue };
                let adj = &mut self.layers[0][host as usize];
                if adj.contains(&u) {
                    continue;
                }
                if adj.len() >= cap {
                    adj.pop();
                }
                adj.push(u);
            }
        }
    }
}
