//! Files, benchmarks and the command-line tool around [`peos_core`].
//!
//! - [`io`]: `.fvecs` / `.ivecs` readers and writers;
//! - [`format`]: the binary index file;
//! - [`data`]: seeded synthetic workloads;
//! - [`bench`]: recall, sweeps and guarantee audits;
//! - [`cli`]: the `peos` binary.

pub mod bench;
pub mod cli;
pub mod data;
pub mod error;
pub mod format;
pub mod io;

pub use error::{Error, Result};
pub use peos_core as core;
