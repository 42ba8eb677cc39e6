//! Privacy-preserving entity resolution over a simulated SIMD homomorphic
//! backend.
//!
//! Two data owners encrypt tokenized records and blocking indexes; an
//! evaluator builds encrypted candidate matrices per chunk pair, reveals only
//! candidate positions, and computes token overlaps with vector rotation.

pub mod approx;
pub mod bench;
pub mod blocking;
pub mod config;
pub mod dataio;
pub mod equality;
pub mod error;
pub mod he;
pub mod matcher;
pub mod matrix;
pub mod metrics;
pub mod par;
pub mod prepared;
pub mod protocol;
pub mod seed;
#[cfg(test)]
mod testkit;

pub use error::{Error, Result};
pub use seed::RootSeed;
