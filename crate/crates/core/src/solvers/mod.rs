//! l1 solvers shared by training and reconstruction.
//!
//! [`sparse_code`] solves the lasso `min ½‖x − Dα‖² + λ‖α‖₁` with a
//! LARS-Lasso homotopy (QR-updated active set), then certifies the
//! result with the KKT residual and polishes it by coordinate descent when
//! the certificate is not yet within tolerance.
//!
//! [`basis_pursuit_reconstruct`] solves `min ‖x‖₁ s.t. ‖y − ΦΨx‖ ≤ ε` through
//! its Lagrangian: it walks the same homotopy path on the design `ΦΨ` and
//! bisects λ inside the segment where the residual first drops below ε, so
//! the returned residual lies in `[0.95ε, ε]`. With ε = 0 the path is
//! followed to its λ → 0 end, the equality-constrained solution.

mod lars;

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{CsError, Result};
use crate::sensing::SensingMatrix;
use crate::types::{Dictionary, Epoch, Lineage, Measurements, SolverConfig, SparseCode};

use lars::{coordinate_descent, objective_of, LarsPath, Outcome, Stop};

/// `sign(v)·max(|v| − t, 0)`.
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// One row of an optional solver trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub objective: f64,
    /// NaN where it was not computed (homotopy breakpoints).
    pub kkt_residual: f64,
}

/// Writes a trace as `iteration,objective,kkt_residual`.
pub fn write_trace<W: Write>(out: W, trace: &[TracePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "objective", "kkt_residual"])?;
    for t in trace {
        w.write_record([
            t.iteration.to_string(),
            format!("{:.17e}", t.objective),
            format!("{:.17e}", t.kkt_residual),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub code: SparseCode,
    pub objective: f64,
    pub kkt_residual: f64,
    /// Homotopy steps plus coordinate-descent sweeps.
    pub iterations: usize,
}

/// `½‖x − Dα‖² + λ‖α‖₁`.
pub fn lasso_objective(design: ArrayView2<f64>, target: ArrayView1<f64>, coef: ArrayView1<f64>, lambda: f64) -> f64 {
    let r = &target - &design.dot(&coef);
    objective_of(r.view(), coef, lambda)
}

/// Largest violation of the lasso optimality conditions.
pub fn kkt_residual(design: ArrayView2<f64>, target: ArrayView1<f64>, coef: ArrayView1<f64>, lambda: f64) -> f64 {
    let r = &target - &design.dot(&coef);
    kkt_from_corr(design.t().dot(&r).view(), coef, lambda)
}

pub(crate) fn kkt_from_corr(corr: ArrayView1<f64>, coef: ArrayView1<f64>, lambda: f64) -> f64 {
    corr.iter()
        .zip(coef)
        .map(|(&c, &a)| {
            if a > 0.0 {
                (c - lambda).abs()
            } else if a < 0.0 {
                (c + lambda).abs()
            } else {
                (c.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Lasso on an arbitrary design matrix (columns need not be normalized).
pub fn lasso(design: ArrayView2<f64>, target: ArrayView1<f64>, config: &SolverConfig) -> Result<LassoSolution> {
    lasso_traced(design, target, config, None)
}

/// As [`lasso`], recording the objective at every breakpoint and sweep.
pub fn lasso_traced(
    design: ArrayView2<f64>,
    target: ArrayView1<f64>,
    config: &SolverConfig,
    mut trace: Option<&mut Vec<TracePoint>>,
) -> Result<LassoSolution> {
    config.validate()?;
    if target.len() != design.nrows() {
        return Err(CsError::DimensionMismatch {
            what: "target length vs design rows",
            expected: design.nrows(),
            found: target.len(),
        });
    }
    if let Some(index) = target.iter().position(|v| !v.is_finite()) {
        return Err(CsError::NonFinite { index });
    }
    let lambda = config.lambda;
    let mut path = LarsPath::new(design, target);
    if let Some(tr) = trace.as_deref_mut() {
        tr.push(TracePoint {
            iteration: 0,
            objective: 0.5 * target.dot(&target),
            kkt_residual: f64::NAN,
        });
    }
    path.run(
        Stop::Lambda(lambda),
        config.max_iterations,
        trace.as_deref_mut(),
        lambda,
    );
    let steps = path.steps;
    let mut beta = path.beta;

    let budget = config.max_iterations.saturating_sub(steps).max(1);
    let (sweeps, kkt) = coordinate_descent(design, target, &mut beta, lambda, config.convergence_tol, budget, trace);
    let iterations = steps + sweeps;
    if kkt > config.convergence_tol {
        return Err(CsError::NotConverged {
            iterations,
            kkt_residual: kkt,
            best: beta.to_vec(),
        });
    }
    let objective = lasso_objective(design, target, beta.view(), lambda);
    Ok(LassoSolution {
        code: SparseCode::from_dense(beta.as_slice().expect("contiguous"))?,
        objective,
        kkt_residual: kkt,
        iterations,
    })
}

/// Sparse code of `target` under `dict`.
pub fn sparse_code(target: &[f64], dict: &Dictionary, config: &SolverConfig) -> Result<LassoSolution> {
    if target.len() != dict.n() {
        return Err(CsError::DimensionMismatch {
            what: "target length vs dictionary rows",
            expected: dict.n(),
            found: target.len(),
        });
    }
    if !(config.lambda > 0.0) {
        return Err(CsError::Config("sparse coding needs lambda > 0".into()));
    }
    lasso(dict.atoms(), ArrayView1::from(target), config)
}

/// A basis-pursuit reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub signal: Epoch,
    pub code: SparseCode,
    /// λ of the Lagrangian problem whose solution was returned.
    pub lambda: f64,
    /// Achieved `‖y − ΦΨx̂‖₂`.
    pub residual: f64,
    pub iterations: usize,
}

/// Precomputed `ΦΨ` for decoding many measurement vectors.
#[derive(Debug, Clone)]
pub struct BpDecoder {
    basis: Array2<f64>,
    design: Array2<f64>,
}

impl BpDecoder {
    pub fn new(phi: &SensingMatrix, dict: &Dictionary) -> Result<Self> {
        if phi.n() != dict.n() {
            return Err(CsError::DimensionMismatch {
                what: "sensing columns vs dictionary rows",
                expected: dict.n(),
                found: phi.n(),
            });
        }
        let basis = dict.atoms().to_owned();
        let design = phi.to_f64().dot(&basis);
        Ok(Self { basis, design })
    }

    pub fn m(&self) -> usize {
        self.design.nrows()
    }

    pub fn k(&self) -> usize {
        self.design.ncols()
    }

    pub fn design(&self) -> ArrayView2<'_, f64> {
        self.design.view()
    }

    /// Solves with absolute residual bound `config.epsilon`.
    pub fn decode(&self, y: &[f64], config: &SolverConfig) -> Result<Reconstruction> {
        config.validate()?;
        if y.len() != self.m() {
            return Err(CsError::DimensionMismatch {
                what: "measurement count",
                expected: self.m(),
                found: y.len(),
            });
        }
        let yv = ArrayView1::from(y);
        let x = self.design.view();
        let eps = config.epsilon;
        let y_norm = yv.dot(&yv).sqrt();

        let (beta, lambda, iterations) = if y_norm <= eps {
            (Array1::zeros(self.k()), f64::INFINITY, 0)
        } else if eps == 0.0 {
            let mut path = LarsPath::new(x, yv);
            if path.run(Stop::Lambda(0.0), config.max_iterations, None, 0.0) == Outcome::StepLimit {
                return Err(CsError::NotConverged {
                    iterations: path.steps,
                    kkt_residual: f64::NAN,
                    best: path.beta.to_vec(),
                });
            }
            let beta = lars::complete_support(x, yv, &path.beta);
            (beta, 0.0, path.steps)
        } else {
            let mut path = LarsPath::new(x, yv);
            let outcome = path.run(Stop::Residual(eps), config.max_iterations, None, 0.0);
            let achieved = path.residual_norm();
            match outcome {
                Outcome::Reached => {}
                Outcome::Exhausted => {
                    return Err(CsError::Infeasible {
                        epsilon: eps,
                        achieved,
                        best: path.beta.to_vec(),
                    })
                }
                Outcome::StepLimit => {
                    return Err(CsError::NotConverged {
                        iterations: path.steps,
                        kkt_residual: f64::NAN,
                        best: path.beta.to_vec(),
                    })
                }
            }
            (path.beta, path.lambda.max(0.0), path.steps)
        };

        let resid = &yv - &x.dot(&beta);
        let residual = resid.dot(&resid).sqrt();
        let signal = self.basis.dot(&beta).to_vec();
        Ok(Reconstruction {
            signal: Epoch::with_lineage(signal, Lineage::Raw)?,
            code: SparseCode::from_dense(beta.as_slice().expect("contiguous"))?,
            lambda,
            residual,
            iterations,
        })
    }
}

pub fn basis_pursuit_reconstruct(
    y: &Measurements,
    phi: &SensingMatrix,
    dict: &Dictionary,
    config: &SolverConfig,
) -> Result<Reconstruction> {
    if y.m != phi.m() || y.n != phi.n() {
        return Err(CsError::DimensionMismatch {
            what: "measurement shape vs sensing matrix rows",
            expected: phi.m(),
            found: y.m,
        });
    }
    BpDecoder::new(phi, dict)?.decode(&y.values, config)
}
