//! Compressive-sensing codec for quasi-periodic biosignals.
//!
//! A personalized overcomplete dictionary is learned offline from cleaned
//! training epochs ([`odl`]); the sensor projects raw epochs with a seeded
//! 0/1 matrix ([`sensing`]); the decoder recovers them by l1 minimization
//! under either the learned dictionary or a fixed DCT–DWT basis
//! ([`solvers`], [`bases`]). [`pipeline`] wires the stages together and
//! evaluates the CR–PRD trade-off.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bases;
pub mod error;
pub mod metrics;
pub mod odl;
pub mod pipeline;
pub mod preprocess;
pub mod sensing;
pub mod solvers;
pub mod synthetic;
pub mod types;

pub use error::{CsError, Result};
pub use metrics::{compression_ratio, prd};
pub use types::{Dictionary, Epoch, Lineage, Measurements, SolverConfig, SparseCode};
