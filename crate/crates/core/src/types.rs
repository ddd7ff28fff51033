//! Domain types shared by the codec stages.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{CsError, Result};

/// Column-norm slack allowed by [`Dictionary`].
pub const NORM_SLACK: f64 = 1e-9;

/// Where an epoch's samples came from.
///
/// Test epochs must stay `Raw`: the sensor only segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lineage {
    Raw,
    Filtered,
    Standardized,
}

/// A fixed-length window of signal samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    samples: Vec<f64>,
    lineage: Lineage,
}

impl Epoch {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        Self::with_lineage(samples, Lineage::Raw)
    }

    pub fn with_lineage(samples: Vec<f64>, lineage: Lineage) -> Result<Self> {
        if samples.is_empty() {
            return Err(CsError::InvalidArgument("epoch must be non-empty".into()));
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(CsError::NonFinite { index });
        }
        Ok(Self { samples, lineage })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn view(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.samples[..])
    }

    pub fn lineage(&self) -> Lineage {
        self.lineage
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn norm(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// An n×k matrix of atoms, column-major, every column norm at most one.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Array2<f64>,
}

impl Dictionary {
    /// Validates finiteness and the column-norm bound.
    pub fn new(atoms: Array2<f64>) -> Result<Self> {
        let (n, k) = atoms.dim();
        if n == 0 || k == 0 {
            return Err(CsError::InvalidArgument(format!("dictionary shape {n}x{k} is empty")));
        }
        if let Some(index) = atoms.iter().position(|v| !v.is_finite()) {
            return Err(CsError::NonFinite { index });
        }
        for (j, col) in atoms.columns().into_iter().enumerate() {
            let norm = col.dot(&col).sqrt();
            if norm > 1.0 + NORM_SLACK {
                return Err(CsError::InvalidArgument(format!("atom {j} has norm {norm} > 1")));
            }
        }
        let mut owned = Array2::zeros((n, k).f());
        owned.assign(&atoms);
        Ok(Self { atoms: owned })
    }

    /// Builds from columns; each column is scaled to unit norm when above it.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let k = columns.len();
        let n = columns.first().map(Vec::len).unwrap_or(0);
        let mut atoms = Array2::zeros((n, k).f());
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(CsError::DimensionMismatch {
                    what: "dictionary column length",
                    expected: n,
                    found: col.len(),
                });
            }
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = if norm > 1.0 { 1.0 / norm } else { 1.0 };
            for (i, v) in col.iter().enumerate() {
                atoms[[i, j]] = v * scale;
            }
        }
        Self::new(atoms)
    }

    pub fn n(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn k(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn atoms(&self) -> ArrayView2<'_, f64> {
        self.atoms.view()
    }

    pub fn atom(&self, j: usize) -> ArrayView1<'_, f64> {
        self.atoms.column(j)
    }

    pub fn into_atoms(self) -> Array2<f64> {
        self.atoms
    }

    /// Appends a column; used to add a constant atom at reconstruction.
    pub fn with_extra_atom(&self, atom: &[f64]) -> Result<Self> {
        let (n, k) = self.atoms.dim();
        if atom.len() != n {
            return Err(CsError::DimensionMismatch {
                what: "extra atom length",
                expected: n,
                found: atom.len(),
            });
        }
        let mut atoms = Array2::zeros((n, k + 1).f());
        atoms.slice_mut(ndarray::s![.., ..k]).assign(&self.atoms);
        atoms.column_mut(k).assign(&ArrayView1::from(atom));
        Self::new(atoms)
    }

    /// Synthesis `D·x` for a sparse code.
    pub fn synthesize(&self, code: &SparseCode) -> Result<Vec<f64>> {
        if code.k() != self.k() {
            return Err(CsError::DimensionMismatch {
                what: "sparse code length",
                expected: self.k(),
                found: code.k(),
            });
        }
        let mut out = Array1::zeros(self.n());
        for (j, v) in code.iter() {
            out.scaled_add(v, &self.atoms.column(j));
        }
        Ok(out.to_vec())
    }

    pub fn max_column_norm(&self) -> f64 {
        self.atoms
            .columns()
            .into_iter()
            .map(|c| c.dot(&c).sqrt())
            .fold(0.0, f64::max)
    }
}

/// A k-length coefficient vector stored as strictly increasing (index, value) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    k: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseCode {
    pub fn zeros(k: usize) -> Self {
        Self {
            k,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn new(k: usize, indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(CsError::DimensionMismatch {
                what: "sparse code values",
                expected: indices.len(),
                found: values.len(),
            });
        }
        for (pos, (&i, &v)) in indices.iter().zip(&values).enumerate() {
            if i >= k {
                return Err(CsError::InvalidArgument(format!("index {i} out of range {k}")));
            }
            if pos > 0 && indices[pos - 1] >= i {
                return Err(CsError::InvalidArgument(
                    "sparse indices must be strictly increasing".into(),
                ));
            }
            if v == 0.0 {
                return Err(CsError::InvalidArgument(format!("explicit zero at index {i}")));
            }
            if !v.is_finite() {
                return Err(CsError::NonFinite { index: i });
            }
        }
        Ok(Self { k, indices, values })
    }

    /// Keeps every entry that is not exactly zero.
    pub fn from_dense(dense: &[f64]) -> Result<Self> {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        Self::new(dense.len(), indices, values)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }
}

/// Sensor output `y = Φf` with the identity of the producing matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub values: Vec<f64>,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub p: f64,
}

impl Measurements {
    pub fn view(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.values[..])
    }
}

/// Parameters shared by the l1 solvers.
///
/// `epsilon` is the absolute residual bound used by basis pursuit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub lambda: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub convergence_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.12,
            epsilon: 0.0,
            max_iterations: 5000,
            convergence_tol: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(CsError::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(CsError::Config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(CsError::Config("max_iterations must be >= 1".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(CsError::Config("convergence_tol must be > 0".into()));
        }
        Ok(())
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }
}
