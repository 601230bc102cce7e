//! Graph-based approximate nearest neighbor search with probabilistic routing.
//!
//! The crate is `no_std` and only needs `alloc`. It contains everything that is
//! pure computation: distance kernels, the seeded Gaussian projection
//! ensembles, per-edge routing metadata, the routing tests (PEOs, RCEOs and
//! SimHash), and an HNSW graph whose base-layer traversal is gated by those
//! tests. File formats, the benchmark harness and the CLI live in the `peos`
//! crate.
//!
//! A typical pipeline:
//!
//! 1. [`graph::HnswIndex::build`] over a [`vecstore::Dataset`];
//! 2. optionally [`graph::HnswIndex::permute_dimensions`] to balance subspace norms;
//! 3. [`graph::HnswIndex::attach_routing`] with a [`routing::RoutingConfig`];
//! 4. [`graph::HnswIndex::search`] with [`graph::SearchParams`].

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod error;
pub mod graph;
pub mod kernels;
pub mod normal;
pub mod projections;
pub mod rng;
pub mod routing;
pub mod vecstore;

pub use error::{Error, Result};
pub use graph::{HnswIndex, HnswParams, SearchParams, SearchStats};
pub use projections::{ExtremeId, ProjectionEnsemble, QueryProjectionTable};
pub use routing::{RoutingConfig, RoutingMode};
pub use vecstore::{Dataset, Metric, PermutationPlan};
