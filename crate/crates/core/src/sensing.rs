//! Sensor-node model: seeded 0/1 sensing matrices and `y = Φf`.
//!
//! Entries come from ChaCha8 seeded with `seed` via `SeedableRng::seed_from_u64`,
//! drawn row-major, one Bernoulli(p) trial per entry. A row that comes out all
//! zero is redrawn from a ChaCha8 stream keyed by `(seed, row, attempt)` and
//! the event is recorded.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{CsError, Result};
use crate::types::{Epoch, Measurements};

/// Probability of a one when none is configured.
pub const DEFAULT_P: f64 = 0.5;

/// A row that was redrawn because it came out all zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GuardEvent {
    pub row: usize,
    pub attempts: u32,
}

/// An m×n matrix with entries in {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    entries: Array2<u8>,
    seed: u64,
    p: f64,
    guard_events: Vec<GuardEvent>,
}

impl SensingMatrix {
    pub fn generate(m: usize, n: usize, seed: u64) -> Result<Self> {
        Self::generate_with_p(m, n, seed, DEFAULT_P)
    }

    pub fn generate_with_p(m: usize, n: usize, seed: u64, p: f64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(CsError::InvalidArgument(format!(
                "sensing matrix shape {m}x{n} is empty"
            )));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(CsError::InvalidArgument(format!("p must be in (0, 1], got {p}")));
        }
        if m > n {
            log::warn!("sensing matrix {m}x{n} does not compress");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Array2::<u8>::zeros((m, n));
        for v in entries.iter_mut() {
            *v = u8::from(rng.random_bool(p));
        }
        let mut guard_events = Vec::new();
        for (row, mut r) in entries.rows_mut().into_iter().enumerate() {
            let mut attempts = 0u32;
            while r.iter().all(|&v| v == 0) {
                attempts += 1;
                let mut sub = ChaCha8Rng::seed_from_u64(seed);
                sub.set_stream(((row as u64) << 32) | u64::from(attempts));
                for v in r.iter_mut() {
                    *v = u8::from(sub.random_bool(p));
                }
            }
            if attempts > 0 {
                log::debug!("sensing row {row} redrawn {attempts} time(s)");
                guard_events.push(GuardEvent { row, attempts });
            }
        }
        Ok(Self {
            entries,
            seed,
            p,
            guard_events,
        })
    }

    /// Builds from explicit 0/1 entries (seed recorded as 0).
    pub fn from_entries(entries: Array2<u8>) -> Result<Self> {
        if entries.iter().any(|&v| v > 1) {
            return Err(CsError::InvalidArgument("sensing entries must be 0 or 1".into()));
        }
        if entries.is_empty() {
            return Err(CsError::InvalidArgument("empty sensing matrix".into()));
        }
        Ok(Self {
            entries,
            seed: 0,
            p: f64::NAN,
            guard_events: Vec::new(),
        })
    }

    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n(&self) -> usize {
        self.entries.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn guard_events(&self) -> &[GuardEvent] {
        &self.guard_events
    }

    pub fn entries(&self) -> ArrayView2<'_, u8> {
        self.entries.view()
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.entries.mapv(f64::from)
    }

    pub fn ones_fraction(&self) -> f64 {
        self.entries.iter().map(|&v| usize::from(v)).sum::<usize>() as f64 / self.entries.len() as f64
    }

    /// `Φ·x` for a plain slice.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n() {
            return Err(CsError::DimensionMismatch {
                what: "signal length vs sensing columns",
                expected: self.n(),
                found: x.len(),
            });
        }
        Ok(self
            .entries
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(x).filter(|(&b, _)| b == 1).map(|(_, v)| *v).sum())
            .collect())
    }
}

pub fn generate_sensing_matrix(m: usize, n: usize, seed: u64) -> Result<SensingMatrix> {
    SensingMatrix::generate(m, n, seed)
}

pub fn encode(epoch: &Epoch, phi: &SensingMatrix) -> Result<Measurements> {
    Ok(Measurements {
        values: phi.apply(epoch.samples())?,
        m: phi.m(),
        n: phi.n(),
        seed: phi.seed(),
        p: phi.p(),
    })
}

/// Encodes every epoch; output order follows input order.
pub fn encode_all(epochs: &[Epoch], phi: &SensingMatrix) -> Result<Vec<Measurements>> {
    epochs.par_iter().map(|e| encode(e, phi)).collect()
}
