//! Configuration, ingestion, persistence and experiment orchestration.

pub mod config;
pub mod experiment;
pub mod ingest;
pub mod persist;
pub mod sweep;

pub use config::{BasisSelector, RunConfig};
pub use experiment::{run_experiment, ResultRow, RESULTS_HEADER};
pub use ingest::{ingest, SampleFormat};
pub use persist::{load_dictionary, save_dictionary, DictMeta};
pub use sweep::{sweep, Grid};
