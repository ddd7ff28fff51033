//! LARS-Lasso homotopy with incremental QR factorization of the active
//! columns, followed by optional coordinate-descent polishing.
//!
//! The path starts at `λ = max|Xᵀy|` with an empty support and moves λ down
//! linearly. On each segment the active coefficients move along
//! `w = (X_AᵀX_A)⁻¹ s_A`; a segment ends when an inactive correlation reaches
//! the boundary (join), an active coefficient crosses zero (drop), or the
//! requested stopping point is hit.

use ndarray::{Array1, ArrayView1, ArrayView2};

use super::{soft_threshold, TracePoint};

/// Relative norm of the new direction below which a joining column is
/// treated as dependent.
const PIVOT_TOL: f64 = 1e-6;
/// Pivot tolerance of the exact-mode support completion.
const COMPLETION_TOL: f64 = 1e-13;
/// Step lengths below this are treated as zero.
const STEP_EPS: f64 = 1e-14;

#[derive(Debug, Clone, Copy)]
pub(crate) enum Stop {
    /// Stop once the path reaches this λ.
    Lambda(f64),
    /// Stop where the residual norm first drops into `[0.95ε, ε]`.
    Residual(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Outcome {
    Reached,
    /// The path ran to λ = 0 without meeting a residual stop.
    Exhausted,
    StepLimit,
}

/// Triangular factor of the active Gram matrix, `X_AᵀX_A = LLᵀ`, built by
/// Gram–Schmidt on the columns themselves (with one reorthogonalization) so
/// that nearly dependent columns are judged by their own norms rather than
/// by squared ones. `L` is stored by rows, `q` holds the orthonormal basis.
#[derive(Debug, Default, Clone)]
struct Factor {
    rows: Vec<Vec<f64>>,
    q: Vec<Array1<f64>>,
}

impl Factor {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut z = Vec::with_capacity(b.len());
        for (i, row) in self.rows.iter().enumerate() {
            let s: f64 = row[..i].iter().zip(&z).map(|(l, v)| l * v).sum();
            z.push((b[i] - s) / row[i]);
        }
        z
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.backward(self.forward(b))
    }

    /// Least-squares coefficients of `y` on the factored columns.
    fn least_squares(&self, y: ArrayView1<'_, f64>) -> Vec<f64> {
        self.backward(self.q.iter().map(|q| q.dot(&y)).collect())
    }

    fn backward(&self, mut x: Vec<f64>) -> Vec<f64> {
        let s = self.len();
        for i in (0..s).rev() {
            let v: f64 = x[i] - (i + 1..s).map(|j| self.rows[j][i] * x[j]).sum::<f64>();
            x[i] = v / self.rows[i][i];
        }
        x
    }

    /// Appends column `x`. Returns false (leaving the factor untouched) if
    /// it is dependent on the columns already present.
    fn push(&mut self, x: ArrayView1<'_, f64>) -> bool {
        self.push_with(x, PIVOT_TOL)
    }

    fn push_with(&mut self, x: ArrayView1<'_, f64>, tol: f64) -> bool {
        let norm = x.dot(&x).sqrt();
        let mut v = x.to_owned();
        let mut z = vec![0.0; self.q.len()];
        for _ in 0..2 {
            for (zi, qi) in z.iter_mut().zip(&self.q) {
                let c = qi.dot(&v);
                v.scaled_add(-c, qi);
                *zi += c;
            }
        }
        let d = v.dot(&v).sqrt();
        if !(d > tol * norm) {
            return false;
        }
        z.push(d);
        self.rows.push(z);
        self.q.push(v / d);
        true
    }
}

pub(crate) struct LarsPath<'a> {
    x: ArrayView2<'a, f64>,
    y: ArrayView1<'a, f64>,
    pub(crate) beta: Array1<f64>,
    resid: Array1<f64>,
    corr: Array1<f64>,
    active: Vec<usize>,
    signs: Vec<f64>,
    excluded: Vec<bool>,
    chol: Factor,
    pub(crate) lambda: f64,
    pub(crate) steps: usize,
}

impl<'a> LarsPath<'a> {
    pub(crate) fn new(x: ArrayView2<'a, f64>, y: ArrayView1<'a, f64>) -> Self {
        let k = x.ncols();
        let corr = x.t().dot(&y);
        let col_sq = x.columns().into_iter().map(|c| c.dot(&c)).collect::<Vec<_>>();
        let excluded = col_sq.iter().map(|&s| s == 0.0).collect();
        let lambda = corr
            .iter()
            .zip(&col_sq)
            .filter(|(_, &s)| s > 0.0)
            .fold(0.0f64, |m, (c, _)| m.max(c.abs()));
        Self {
            x,
            y,
            beta: Array1::zeros(k),
            resid: y.to_owned(),
            corr,
            active: Vec::new(),
            signs: Vec::new(),
            excluded,
            chol: Factor::default(),
            lambda,
            steps: 0,
        }
    }

    pub(crate) fn residual_norm(&self) -> f64 {
        self.resid.dot(&self.resid).sqrt()
    }

    fn try_join(&mut self, j: usize) -> bool {
        if self.chol.push(self.x.column(j)) {
            self.active.push(j);
            self.signs.push(if self.corr[j] >= 0.0 { 1.0 } else { -1.0 });
            true
        } else {
            self.excluded[j] = true;
            false
        }
    }

    fn refactor(&mut self) {
        let active = std::mem::take(&mut self.active);
        let signs = std::mem::take(&mut self.signs);
        self.chol = Factor::default();
        for (j, s) in active.into_iter().zip(signs) {
            if self.chol.push(self.x.column(j)) {
                self.active.push(j);
                self.signs.push(s);
            } else {
                self.excluded[j] = true;
                self.beta[j] = 0.0;
            }
        }
    }

    /// Exact residual and correlations for the current coefficients.
    fn resync(&mut self) {
        let mut r = self.y.to_owned();
        for &j in &self.active {
            r.scaled_add(-self.beta[j], &self.x.column(j));
        }
        self.corr = self.x.t().dot(&r);
        self.resid = r;
    }

    fn pick_entering(&self, skip: Option<usize>) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (j, c) in self.corr.iter().enumerate() {
            if self.excluded[j] || Some(j) == skip || self.active.contains(&j) {
                continue;
            }
            if best.is_none_or(|(_, b)| c.abs() > b) {
                best = Some((j, c.abs()));
            }
        }
        best.map(|(j, _)| j)
    }

    pub(crate) fn run(
        &mut self,
        stop: Stop,
        max_steps: usize,
        mut trace: Option<&mut Vec<TracePoint>>,
        trace_lambda: f64,
    ) -> Outcome {
        let target = match stop {
            Stop::Lambda(l) => l.max(0.0),
            Stop::Residual(_) => 0.0,
        };
        if let Stop::Residual(eps) = stop {
            if self.residual_norm() <= eps {
                return Outcome::Reached;
            }
        }
        if self.lambda <= target {
            return Outcome::Reached;
        }
        let mut just_dropped: Option<usize> = None;
        if self.active.is_empty() {
            match self.pick_entering(None) {
                Some(j) => {
                    self.try_join(j);
                }
                None => return Outcome::Reached,
            }
        }
        loop {
            if self.steps >= max_steps {
                return Outcome::StepLimit;
            }
            self.steps += 1;
            if self.active.is_empty() {
                match self.pick_entering(just_dropped) {
                    Some(j) => {
                        self.try_join(j);
                        continue;
                    }
                    None => return Outcome::Exhausted,
                }
            }

            let w = self.chol.solve(&self.signs);
            let mut u = Array1::<f64>::zeros(self.x.nrows());
            for (&j, &wj) in self.active.iter().zip(&w) {
                u.scaled_add(wj, &self.x.column(j));
            }
            let a = self.x.t().dot(&u);

            let lam = self.lambda;
            let mut gamma = lam - target;
            let mut event = Event::End;
            for j in 0..self.corr.len() {
                if self.excluded[j] || Some(j) == just_dropped || self.active.contains(&j) {
                    continue;
                }
                let (c, aj) = (self.corr[j], a[j]);
                for (num, den) in [(lam - c, 1.0 - aj), (lam + c, 1.0 + aj)] {
                    if den > STEP_EPS {
                        let g = num / den;
                        if g > STEP_EPS && g < gamma {
                            gamma = g;
                            event = Event::Join(j);
                        }
                    }
                }
            }
            for (pos, (&j, &wj)) in self.active.iter().zip(&w).enumerate() {
                if wj != 0.0 {
                    let g = -self.beta[j] / wj;
                    if g > STEP_EPS && g < gamma {
                        gamma = g;
                        event = Event::Drop(pos);
                    }
                }
            }

            if let Stop::Residual(eps) = stop {
                let end_res = residual_at(&self.resid, &u, gamma);
                if end_res <= eps {
                    let g = bisect_residual(&self.resid, &u, gamma, eps);
                    self.advance(&w, g);
                    self.resync();
                    return Outcome::Reached;
                }
            }

            self.advance(&w, gamma);
            self.resync();
            just_dropped = None;
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(TracePoint {
                    iteration: self.steps,
                    objective: objective_of(self.resid.view(), self.beta.view(), trace_lambda),
                    kkt_residual: f64::NAN,
                });
            }
            match event {
                Event::End => {
                    return match stop {
                        Stop::Residual(eps) if self.residual_norm() > eps => Outcome::Exhausted,
                        _ => Outcome::Reached,
                    };
                }
                Event::Join(j) => {
                    self.try_join(j);
                }
                Event::Drop(pos) => {
                    let j = self.active[pos];
                    self.beta[j] = 0.0;
                    self.active.remove(pos);
                    self.signs.remove(pos);
                    self.refactor();
                    self.resync();
                    just_dropped = Some(j);
                }
            }
        }
    }

    fn advance(&mut self, w: &[f64], gamma: f64) {
        for (&j, &wj) in self.active.iter().zip(w) {
            self.beta[j] += gamma * wj;
        }
        self.lambda -= gamma;
    }
}

/// Least-squares refit of `y` on the support of `beta`, extended by the
/// columns most correlated with the residual until the design rank is
/// reached, unless `beta` already fits `y`. Used to enforce `Xβ = y` at the
/// end of an exact-mode path.
pub(crate) fn complete_support(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, beta: &Array1<f64>) -> Array1<f64> {
    let resid = &y - &x.dot(beta);
    if resid.dot(&resid).sqrt() <= 1e-12 * y.dot(&y).sqrt() {
        return beta.clone();
    }
    let mut factor = Factor::default();
    let mut support = Vec::new();
    for j in (0..beta.len()).filter(|&j| beta[j] != 0.0) {
        if factor.push_with(x.column(j), COMPLETION_TOL) {
            support.push(j);
        }
    }
    let corr = x.t().dot(&resid);
    let mut order: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] == 0.0).collect();
    order.sort_by(|&a, &b| corr[b].abs().total_cmp(&corr[a].abs()));
    for j in order {
        if factor.len() == x.nrows() {
            break;
        }
        if factor.push_with(x.column(j), COMPLETION_TOL) {
            support.push(j);
        }
    }
    let mut out = Array1::zeros(beta.len());
    for (&j, v) in support.iter().zip(factor.least_squares(y)) {
        out[j] = v;
    }
    out
}

#[derive(Debug, Clone, Copy)]
enum Event {
    End,
    Join(usize),
    Drop(usize),
}

fn residual_at(r: &Array1<f64>, u: &Array1<f64>, gamma: f64) -> f64 {
    r.iter()
        .zip(u)
        .map(|(ri, ui)| {
            let v = ri - gamma * ui;
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

/// Step length on `[0, hi]` whose residual lies in `[0.95ε, ε]`.
fn bisect_residual(r: &Array1<f64>, u: &Array1<f64>, hi: f64, eps: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let res = residual_at(r, u, mid);
        if res > eps {
            lo = mid;
        } else if res < 0.95 * eps {
            hi = mid;
        } else {
            return mid;
        }
    }
    hi
}

pub(crate) fn objective_of(resid: ArrayView1<f64>, beta: ArrayView1<f64>, lambda: f64) -> f64 {
    0.5 * resid.dot(&resid) + lambda * beta.iter().map(|v| v.abs()).sum::<f64>()
}

/// Cyclic coordinate descent on `½‖y − Xβ‖² + λ‖β‖₁` starting from `beta`.
///
/// Runs until the KKT residual is at most `tol` or `max_sweeps` is spent;
/// returns (sweeps, final KKT residual).
pub(crate) fn coordinate_descent(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    beta: &mut Array1<f64>,
    lambda: f64,
    tol: f64,
    max_sweeps: usize,
    mut trace: Option<&mut Vec<TracePoint>>,
) -> (usize, f64) {
    let col_sq: Vec<f64> = x.columns().into_iter().map(|c| c.dot(&c)).collect();
    let mut r = y.to_owned() - x.dot(beta);
    let mut kkt = super::kkt_from_corr(x.t().dot(&r).view(), beta.view(), lambda);
    let mut sweeps = 0;
    while kkt > tol && sweeps < max_sweeps {
        sweeps += 1;
        for (j, &sq) in col_sq.iter().enumerate() {
            if sq == 0.0 {
                continue;
            }
            let xj = x.column(j);
            let old = beta[j];
            let rho = xj.dot(&r) + sq * old;
            let new = soft_threshold(rho, lambda) / sq;
            if new != old {
                r.scaled_add(old - new, &xj);
                beta[j] = new;
            }
        }
        // fresh residual to keep drift out of the certificate
        r = y.to_owned() - x.dot(beta);
        kkt = super::kkt_from_corr(x.t().dot(&r).view(), beta.view(), lambda);
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(TracePoint {
                iteration: tr.len() + 1,
                objective: objective_of(r.view(), beta.view(), lambda),
                kkt_residual: kkt,
            });
        }
    }
    (sweeps, kkt)
}
