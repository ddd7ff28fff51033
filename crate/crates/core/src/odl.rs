//! Online dictionary learning.
//!
//! Each step draws a sample (or mini-batch), sparse-codes it against the
//! current dictionary, folds the code into the accumulators
//! `A = Σ ααᵀ` and `B = Σ xαᵀ`, and then runs block coordinate descent over
//! the columns of the dictionary on the surrogate
//! `(1/t)(½ tr(DᵀDA) − tr(DᵀB))`, projecting each column onto the unit ball.

use std::io::Write;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, ArrayView2, ShapeBuilder};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CsError, Result};
use crate::solvers::{sparse_code, LassoSolution};
use crate::types::{Dictionary, Epoch, Lineage, SolverConfig};

/// Columns whose `A_jj` is below this are skipped by the update.
pub const DEAD_ATOM_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdlConfig {
    pub lambda: f64,
    pub batch_size: usize,
    /// Shuffled sweeps over the training set.
    pub passes: usize,
    /// Column sweeps per dictionary update.
    pub update_sweeps: usize,
    pub seed: u64,
    /// Sparse-coding iteration budget.
    pub max_iterations: usize,
    /// Sparse-coding KKT tolerance.
    pub convergence_tol: f64,
}

impl Default for OdlConfig {
    fn default() -> Self {
        Self {
            lambda: 0.12,
            batch_size: 1,
            passes: 5,
            update_sweeps: 1,
            seed: 0,
            max_iterations: 5000,
            convergence_tol: 1e-6,
        }
    }
}

impl OdlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(CsError::Config(format!("odl lambda must be > 0, got {}", self.lambda)));
        }
        if self.batch_size == 0 || self.update_sweeps == 0 {
            return Err(CsError::Config("batch_size and update_sweeps must be >= 1".into()));
        }
        self.coding_config().validate()
    }

    pub fn coding_config(&self) -> SolverConfig {
        SolverConfig {
            lambda: self.lambda,
            epsilon: 0.0,
            max_iterations: self.max_iterations,
            convergence_tol: self.convergence_tol,
        }
    }
}

/// Per-epoch mean removal and a global scale shared by training and decoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub scale: f64,
}

impl Standardizer {
    /// Global standard deviation of the mean-removed samples.
    pub fn fit(epochs: &[Epoch]) -> Result<Self> {
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for e in epochs {
            let mean = e.mean();
            sum_sq += e.samples().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
            count += e.len();
        }
        if count == 0 {
            return Err(CsError::NotEnoughEpochs {
                needed: 1,
                available: 0,
            });
        }
        let scale = (sum_sq / count as f64).sqrt();
        if !(scale > 0.0) {
            return Err(CsError::ConstantSignal);
        }
        Ok(Self { scale })
    }

    pub fn apply(&self, epoch: &Epoch) -> Result<Epoch> {
        let mean = epoch.mean();
        Epoch::with_lineage(
            epoch.samples().iter().map(|v| (v - mean) / self.scale).collect(),
            Lineage::Standardized,
        )
    }
}

/// Accumulators and current dictionary of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    a: Array2<f64>,
    b: Array2<f64>,
    dict: Dictionary,
    t: usize,
    rng_seed: u64,
}

impl TrainState {
    pub fn new(dict: Dictionary, rng_seed: u64) -> Self {
        let (n, k) = (dict.n(), dict.k());
        Self {
            a: Array2::zeros((k, k)),
            b: Array2::zeros((n, k).f()),
            dict,
            t: 0,
            rng_seed,
        }
    }

    /// Reassembles a persisted state.
    pub fn from_parts(a: Array2<f64>, b: Array2<f64>, dict: Dictionary, t: usize, rng_seed: u64) -> Result<Self> {
        let (n, k) = (dict.n(), dict.k());
        if a.dim() != (k, k) {
            return Err(CsError::DimensionMismatch {
                what: "accumulator A size",
                expected: k,
                found: a.nrows(),
            });
        }
        if b.dim() != (n, k) {
            return Err(CsError::DimensionMismatch {
                what: "accumulator B rows",
                expected: n,
                found: b.nrows(),
            });
        }
        // same layouts as `new`, so products round identically after a reload
        let mut ac = Array2::zeros((k, k));
        ac.assign(&a);
        let mut bf = Array2::zeros((n, k).f());
        bf.assign(&b);
        Ok(Self {
            a: ac,
            b: bf,
            dict,
            t,
            rng_seed,
        })
    }

    pub fn a(&self) -> ArrayView2<'_, f64> {
        self.a.view()
    }

    pub fn b(&self) -> ArrayView2<'_, f64> {
        self.b.view()
    }

    pub fn dict(&self) -> &Dictionary {
        &self.dict
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn into_dict(self) -> Dictionary {
        self.dict
    }

    /// Folds one code into the accumulators and bumps `t`.
    pub fn accumulate(&mut self, x: &[f64], sol: &LassoSolution) -> Result<()> {
        if x.len() != self.dict.n() || sol.code.k() != self.dict.k() {
            return Err(CsError::DimensionMismatch {
                what: "sample/code vs dictionary",
                expected: self.dict.n(),
                found: x.len(),
            });
        }
        let xv = ndarray::ArrayView1::from(x);
        for (i, vi) in sol.code.iter() {
            for (j, vj) in sol.code.iter() {
                self.a[[i, j]] += vi * vj;
            }
            self.b.column_mut(i).scaled_add(vi, &xv);
        }
        self.t += 1;
        Ok(())
    }

    pub fn surrogate(&self) -> f64 {
        surrogate(self.dict.atoms(), self.a.view(), self.b.view(), self.t)
    }

    /// Symmetry within `sym_tol` and `A + floor·I` admits a Cholesky factor.
    pub fn accumulator_is_psd(&self, sym_tol: f64, floor: f64) -> bool {
        let k = self.a.nrows();
        for i in 0..k {
            for j in 0..i {
                if (self.a[[i, j]] - self.a[[j, i]]).abs() > sym_tol {
                    return false;
                }
            }
        }
        let mut l = Array2::<f64>::zeros((k, k));
        for i in 0..k {
            for j in 0..=i {
                let mut s = self.a[[i, j]] + if i == j { floor } else { 0.0 };
                for p in 0..j {
                    s -= l[[i, p]] * l[[j, p]];
                }
                if i == j {
                    if s < 0.0 {
                        return false;
                    }
                    l[[i, i]] = s.sqrt();
                } else if l[[j, j]] > 0.0 {
                    l[[i, j]] = s / l[[j, j]];
                }
            }
        }
        true
    }
}

/// `(1/t)(½ tr(DᵀDA) − tr(DᵀB))`; zero when `t = 0`.
pub fn surrogate(d: ArrayView2<f64>, a: ArrayView2<f64>, b: ArrayView2<f64>, t: usize) -> f64 {
    if t == 0 {
        return 0.0;
    }
    let da = d.dot(&a);
    surrogate_from_product(d, da.view(), b, t)
}

fn surrogate_from_product(d: ArrayView2<f64>, da: ArrayView2<f64>, b: ArrayView2<f64>, t: usize) -> f64 {
    let mut quad = 0.0;
    let mut lin = 0.0;
    for ((dj, daj), bj) in d.columns().into_iter().zip(da.columns()).zip(b.columns()) {
        quad += dj.dot(&daj);
        lin += dj.dot(&bj);
    }
    (0.5 * quad - lin) / t as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryUpdate {
    pub dict: Dictionary,
    /// Columns skipped because `A_jj` is below [`DEAD_ATOM_THRESHOLD`].
    pub dead_atoms: Vec<usize>,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
}

/// Block coordinate descent over dictionary columns.
pub fn dictionary_update(state: &TrainState, sweeps: usize) -> Result<DictionaryUpdate> {
    if state.t == 0 {
        return Err(CsError::InvalidArgument("dictionary update needs t >= 1".into()));
    }
    let a = &state.a;
    let b = &state.b;
    let k = a.nrows();
    let mut d = state.dict.atoms().to_owned();
    let mut da = d.dot(a);
    let before = surrogate_from_product(d.view(), da.view(), b.view(), state.t);

    let dead_atoms: Vec<usize> = (0..k).filter(|&j| a[[j, j]] < DEAD_ATOM_THRESHOLD).collect();
    let mut u = Array1::<f64>::zeros(d.nrows());
    for _ in 0..sweeps {
        for j in 0..k {
            let ajj = a[[j, j]];
            if ajj < DEAD_ATOM_THRESHOLD {
                continue;
            }
            u.assign(&b.column(j));
            u -= &da.column(j);
            u /= ajj;
            u += &d.column(j);
            let norm = u.dot(&u).sqrt();
            if norm > 1.0 {
                u /= norm;
            }
            let delta = &u - &d.column(j);
            d.column_mut(j).assign(&u);
            for (l, &ajl) in a.row(j).iter().enumerate() {
                if ajl != 0.0 {
                    da.column_mut(l).scaled_add(ajl, &delta);
                }
            }
        }
    }
    let after = surrogate_from_product(d.view(), da.view(), b.view(), state.t);
    Ok(DictionaryUpdate {
        dict: Dictionary::new(d)?,
        dead_atoms,
        surrogate_before: before,
        surrogate_after: after,
    })
}

/// Codes one epoch, accumulates it, and updates the dictionary.
pub fn absorb_sample(state: TrainState, epoch: &Epoch, config: &OdlConfig) -> Result<TrainState> {
    absorb_batch(state, &[epoch], config).map(|(s, _)| s)
}

/// Statistics of one mini-batch step.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStep {
    pub nnz_mean: f64,
    /// `‖x − Dα‖` per batch entry, against the pre-update dictionary.
    pub residuals: Vec<f64>,
    pub update: Option<DictionaryUpdateSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryUpdateSummary {
    pub dead_atoms: usize,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
}

/// Codes a mini-batch against the current dictionary (in parallel), merges
/// the codes into the accumulators in batch order, then updates once.
pub fn absorb_batch(mut state: TrainState, batch: &[&Epoch], config: &OdlConfig) -> Result<(TrainState, BatchStep)> {
    config.validate()?;
    let n = state.dict.n();
    if let Some(bad) = batch.iter().find(|e| e.len() != n) {
        return Err(CsError::DimensionMismatch {
            what: "epoch length vs dictionary rows",
            expected: n,
            found: bad.len(),
        });
    }
    let coding = config.coding_config();
    let dict = &state.dict;
    let solutions: Vec<LassoSolution> = batch
        .par_iter()
        .map(|e| sparse_code(e.samples(), dict, &coding))
        .collect::<Result<_>>()?;

    let mut residuals = Vec::with_capacity(batch.len());
    let mut nnz = 0usize;
    for (e, sol) in batch.iter().zip(&solutions) {
        let approx = state.dict.synthesize(&sol.code)?;
        residuals.push(
            e.samples()
                .iter()
                .zip(&approx)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        );
        nnz += sol.code.nnz();
    }
    for (e, sol) in batch.iter().zip(&solutions) {
        state.accumulate(e.samples(), sol)?;
    }
    let update = if state.t > 0 && nnz > 0 {
        let upd = dictionary_update(&state, config.update_sweeps)?;
        state.dict = upd.dict;
        Some(DictionaryUpdateSummary {
            dead_atoms: upd.dead_atoms.len(),
            surrogate_before: upd.surrogate_before,
            surrogate_after: upd.surrogate_after,
        })
    } else {
        None
    };
    Ok((
        state,
        BatchStep {
            nnz_mean: nnz as f64 / batch.len().max(1) as f64,
            residuals,
            update,
        },
    ))
}

/// Distinct random epochs scaled to unit norm; zero-norm epochs are skipped.
pub fn init_dictionary(epochs: &[Epoch], k: usize, seed: u64) -> Result<Dictionary> {
    if k == 0 {
        return Err(CsError::InvalidArgument("dictionary needs k >= 1".into()));
    }
    let n = epochs.first().map(Epoch::len).unwrap_or(0);
    if let Some(bad) = epochs.iter().find(|e| e.len() != n) {
        return Err(CsError::DimensionMismatch {
            what: "epoch length",
            expected: n,
            found: bad.len(),
        });
    }
    let mut order: Vec<usize> = (0..epochs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let columns: Vec<Vec<f64>> = order
        .into_iter()
        .filter_map(|i| {
            let norm = epochs[i].norm();
            (norm > 0.0).then(|| epochs[i].samples().iter().map(|v| v / norm).collect())
        })
        .take(k)
        .collect();
    if columns.len() < k {
        return Err(CsError::NotEnoughEpochs {
            needed: k,
            available: columns.len(),
        });
    }
    Dictionary::from_columns(&columns)
}

/// One logged dictionary update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub t: usize,
    pub surrogate_before: f64,
    pub surrogate: f64,
    pub nnz_mean: f64,
    pub dead_atoms: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReseedEvent {
    pub pass: usize,
    pub atom: usize,
    /// Index into the training set of the epoch that replaced the atom.
    pub epoch: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingReport {
    pub rows: Vec<ReportRow>,
    pub reseeds: Vec<ReseedEvent>,
    pub passes: usize,
    pub wall_time: Duration,
}

impl TrainingReport {
    /// `t,surrogate,nnz_mean,dead_atoms`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "surrogate", "nnz_mean", "dead_atoms"])?;
        for r in &self.rows {
            w.write_record([
                r.t.to_string(),
                format!("{:.17e}", r.surrogate),
                format!("{:.6}", r.nnz_mean),
                r.dead_atoms.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Largest increase of the surrogate across any single update.
    pub fn max_surrogate_increase(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.surrogate - r.surrogate_before)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Runs `config.passes` shuffled passes starting from `d0`.
pub fn train(epochs: &[Epoch], d0: Dictionary, config: &OdlConfig) -> Result<(Dictionary, TrainingReport)> {
    let (state, report) = train_state(TrainState::new(d0, config.seed), epochs, config)?;
    Ok((state.into_dict(), report))
}

/// Continues training from an existing state.
pub fn train_state(
    mut state: TrainState,
    epochs: &[Epoch],
    config: &OdlConfig,
) -> Result<(TrainState, TrainingReport)> {
    config.validate()?;
    let mut report = TrainingReport::default();
    if config.passes == 0 {
        return Ok((state, report));
    }
    if epochs.is_empty() {
        return Err(CsError::NotEnoughEpochs {
            needed: 1,
            available: 0,
        });
    }
    let start = Instant::now();
    let k = state.dict.k();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(state.t as u64);
    let mut order: Vec<usize> = (0..epochs.len()).collect();

    for pass in 0..config.passes {
        order.shuffle(&mut rng);
        let mut residuals = vec![0.0; epochs.len()];
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Epoch> = chunk.iter().map(|&i| &epochs[i]).collect();
            let (next, step) = absorb_batch(state, &batch, config)?;
            state = next;
            for (&i, r) in chunk.iter().zip(&step.residuals) {
                residuals[i] = *r;
            }
            let (before, after, dead) = match &step.update {
                Some(u) => (u.surrogate_before, u.surrogate_after, u.dead_atoms),
                None => {
                    let s = state.surrogate();
                    let dead = (0..k).filter(|&j| state.a[[j, j]] < DEAD_ATOM_THRESHOLD).count();
                    (s, s, dead)
                }
            };
            report.rows.push(ReportRow {
                t: state.t,
                surrogate_before: before,
                surrogate: after,
                nnz_mean: step.nnz_mean,
                dead_atoms: dead,
            });
        }
        report.passes = pass + 1;

        let dead: Vec<usize> = (0..k).filter(|&j| state.a[[j, j]] < DEAD_ATOM_THRESHOLD).collect();
        if dead.len() * 2 > k {
            log::error!(
                "pass {}: {} of {k} atoms unused; lambda {} may be too large",
                pass + 1,
                dead.len(),
                config.lambda
            );
            return Err(CsError::TooManyDeadAtoms {
                dead: dead.len(),
                k,
                pass: pass + 1,
            });
        }
        if !dead.is_empty() {
            reseed(&mut state, epochs, &residuals, &dead, pass + 1, &mut report)?;
        }
    }
    report.wall_time = start.elapsed();
    Ok((state, report))
}

/// Replaces dead atoms by the worst-reconstructed epochs of the last pass.
fn reseed(
    state: &mut TrainState,
    epochs: &[Epoch],
    residuals: &[f64],
    dead: &[usize],
    pass: usize,
    report: &mut TrainingReport,
) -> Result<()> {
    let mut worst: Vec<usize> = (0..epochs.len()).collect();
    // stable sort keeps ties in index order
    worst.sort_by(|&x, &y| residuals[y].total_cmp(&residuals[x]));
    let mut atoms = state.dict.atoms().to_owned();
    let mut candidates = worst.into_iter().filter(|&i| epochs[i].norm() > 0.0);
    for &j in dead {
        let Some(i) = candidates.next() else { break };
        let norm = epochs[i].norm();
        for (dst, v) in atoms.column_mut(j).iter_mut().zip(epochs[i].samples()) {
            *dst = v / norm;
        }
        log::debug!("pass {pass}: atom {j} reseeded from epoch {i}");
        report.reseeds.push(ReseedEvent {
            pass,
            atom: j,
            epoch: i,
        });
    }
    state.dict = Dictionary::new(atoms)?;
    Ok(())
}
