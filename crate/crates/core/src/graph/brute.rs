//! Exact k-nearest-neighbor scan, the ground-truth oracle.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;

use super::search::{Cand, Neighbor};
use crate::error::{invalid, Result};
use crate::vecstore::{distance, Dataset, Metric};

/// The `k` nearest rows of `ds` to `q` by full scan, ties to the lower id.
pub fn brute_force_knn(ds: &Dataset, q: &[f32], k: usize, metric: Metric) -> Result<Vec<Neighbor>> {
    if k > ds.len() {
        return invalid(alloc::format!("K={k} exceeds the dataset size {}", ds.len()));
    }
    let mut heap: BinaryHeap<Cand> = BinaryHeap::with_capacity(k + 1);
    for (i, row) in ds.rows().enumerate() {
        let c = Cand { score: distance(row, q, metric)?, id: i as u32 };
        if heap.len() < k {
            heap.push(c);
        } else if k > 0 && c < *heap.peek().unwrap() {
            heap.pop();
            heap.push(c);
        }
    }
    Ok(heap.into_sorted_vec().into_iter().map(|c| Neighbor { id: c.id, distance: c.score }).collect())
}

/// [`brute_force_knn`] ids for every row of `queries`.
pub fn brute_force_knn_batch(ds: &Dataset, queries: &Dataset, k: usize, metric: Metric) -> Result<Vec<Vec<u32>>> {
    queries.rows().map(|q| Ok(brute_force_knn(ds, q, k, metric)?.into_iter().map(|n| n.id).collect())).collect()
}
