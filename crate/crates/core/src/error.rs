use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CsError>;

#[derive(Debug, Error)]
pub enum CsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {what} (expected {expected}, found {found})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("PRD undefined: original signal is constant")]
    ConstantSignal,

    #[error("invalid filter configuration: {0}")]
    FilterConfig(String),

    #[error("lasso did not converge in {iterations} iterations (kkt residual {kkt_residual:.3e})")]
    NotConverged {
        iterations: usize,
        kkt_residual: f64,
        /// Best iterate found, dense.
        best: Vec<f64>,
    },

    #[error("residual bound {epsilon:.6e} unattainable; least residual reached {achieved:.6e}")]
    Infeasible {
        epsilon: f64,
        achieved: f64,
        /// Least-residual iterate, dense.
        best: Vec<f64>,
    },

    #[error("not enough usable epochs: need {needed}, have {available}")]
    NotEnoughEpochs { needed: usize, available: usize },

    #[error("{dead} of {k} atoms unused after pass {pass}")]
    TooManyDeadAtoms { dead: usize, k: usize, pass: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("version mismatch: expected magic {expected:?}, found {found:?}")]
    Version { expected: String, found: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CsError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CsError {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        CsError::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
