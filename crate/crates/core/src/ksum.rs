//! The k-worst Non-ESG operator and the optimization models built on it.
//!
//! For a portfolio `x` on the simplex and agency rows `s^i`, the k-worst
//! score is the sum of the `k` largest values of `s^i' x`. Its LP dual
//!
//! ```text
//!     min  k u + sum_i v_i   s.t.  v_i + u >= s^i' x,  v >= 0,  u >= 0
//! ```
//!
//! has the same optimal value, so every model below is a convex QP in the
//! stacked variable `y = (x, v, u)` described by [`DualizedVariables`].

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::qp::{Bounds, QpProblem};

/// Covariance, expected returns, Non-ESG matrix and the `k` of the k-worst score.
#[derive(Debug, Clone, PartialEq)]
pub struct KsumInstance {
    sigma: DMatrix<f64>,
    mu: DVector<f64>,
    s: DMatrix<f64>,
    k: usize,
}

impl KsumInstance {
    /// `s` is `m x n` with one row per agency, entries in `[0, 1]`.
    pub fn new(sigma: DMatrix<f64>, mu: DVector<f64>, s: DMatrix<f64>, k: usize) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(Error::Shape("instance needs at least one asset".into()));
        }
        if sigma.shape() != (n, n) {
            return Err(Error::Shape(format!(
                "sigma is {}x{}, expected {n}x{n}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if s.ncols() != n || s.nrows() == 0 {
            return Err(Error::Shape(format!(
                "score matrix is {}x{}, expected m x {n} with m >= 1",
                s.nrows(),
                s.ncols()
            )));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("mu has non-finite entries".into()));
        }
        if s.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("Non-ESG scores must lie in [0, 1]".into()));
        }
        let m = s.nrows();
        if k == 0 || k > m {
            return Err(Error::InvalidArgument(format!("k = {k} outside [1, {m}]")));
        }
        let sigma = linalg::repair_psd(&sigma, "sigma")?;
        Ok(Self { sigma, mu, s, k })
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_assets(&self) -> usize {
        self.mu.len()
    }

    pub fn n_agencies(&self) -> usize {
        self.s.nrows()
    }

    /// Same data with a different `k`.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        Self::new(self.sigma.clone(), self.mu.clone(), self.s.clone(), k)
    }

    pub fn layout(&self) -> DualizedVariables {
        DualizedVariables {
            n: self.n_assets(),
            m: self.n_agencies(),
        }
    }

    pub fn variance(&self, x: &DVector<f64>) -> f64 {
        linalg::quad_form(&self.sigma, x)
    }

    pub fn expected_return(&self, x: &DVector<f64>) -> f64 {
        self.mu.dot(x)
    }

    /// Per-agency portfolio scores `s^i' x`.
    pub fn agency_scores(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_weights(x)?;
        Ok(&self.s * x)
    }

    fn check_weights(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n_assets() {
            return Err(Error::Shape(format!(
                "weights have length {}, expected {}",
                x.len(),
                self.n_assets()
            )));
        }
        Ok(())
    }
}

/// Index layout of `y = (x, v, u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DualizedVariables {
    pub n: usize,
    pub m: usize,
}

impl DualizedVariables {
    pub fn dim(&self) -> usize {
        self.n + self.m + 1
    }

    pub fn x(&self) -> Range<usize> {
        0..self.n
    }

    pub fn v(&self) -> Range<usize> {
        self.n..self.n + self.m
    }

    pub fn u(&self) -> usize {
        self.n + self.m
    }

    pub fn split(&self, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>, f64) {
        (
            y.rows(0, self.n).into_owned(),
            y.rows(self.n, self.m).into_owned(),
            y[self.u()],
        )
    }
}

/// Sum of the `k` largest agency scores, by stable descending sort.
pub fn kworst_oracle(instance: &KsumInstance, x: &DVector<f64>) -> Result<f64> {
    let scores = instance.agency_scores(x)?;
    let mut sorted: Vec<f64> = scores.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted.iter().take(instance.k).sum())
}

/// Optimal point of the inner dual LP at a fixed `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct KworstDual {
    pub u: f64,
    pub v: DVector<f64>,
    pub value: f64,
}

/// Closed-form solution of the dual LP: `u` is the k-th largest score.
pub fn kworst_dual(instance: &KsumInstance, x: &DVector<f64>) -> Result<KworstDual> {
    let scores = instance.agency_scores(x)?;
    let mut work: Vec<f64> = scores.iter().copied().collect();
    let (_, kth, _) = work.select_nth_unstable_by(instance.k - 1, |a, b| b.total_cmp(a));
    let u = kth.max(0.0);
    let v = scores.map(|si| (si - u).max(0.0));
    let value = instance.k as f64 * u + v.sum();
    Ok(KworstDual { u, v, value })
}

pub fn kworst_dual_value(instance: &KsumInstance, x: &DVector<f64>) -> Result<f64> {
    kworst_dual(instance, x).map(|d| d.value)
}

/// Simplex row on `x`, the `m` dual rows and nonnegativity on every block.
fn dual_block(instance: &KsumInstance, p: DMatrix<f64>, q: DVector<f64>) -> QpProblem {
    let lay = instance.layout();
    let d = lay.dim();
    let mut a_eq = DMatrix::zeros(1, d);
    for j in lay.x() {
        a_eq[(0, j)] = 1.0;
    }
    let m = lay.m;
    let mut a_in = DMatrix::zeros(m, d);
    for i in 0..m {
        for j in lay.x() {
            a_in[(i, j)] = instance.s[(i, j)];
        }
        a_in[(i, lay.n + i)] = -1.0;
        a_in[(i, lay.u())] = -1.0;
    }
    QpProblem::new(p, q)
        .with_equalities(a_eq, DVector::from_element(1, 1.0))
        .with_inequalities(a_in, DVector::zeros(m))
        .with_bounds(Bounds::nonnegative(d))
}

fn score_cost_row(instance: &KsumInstance) -> Vec<f64> {
    let lay = instance.layout();
    let mut row = vec![0.0; lay.dim()];
    for j in lay.v() {
        row[j] = 1.0;
    }
    row[lay.u()] = instance.k as f64;
    row
}

fn return_floor_row(mu: &DVector<f64>, d: usize) -> Vec<f64> {
    let mut row = vec![0.0; d];
    for (j, m) in mu.iter().enumerate() {
        row[j] = -m;
    }
    row
}

fn variance_block(sigma: &DMatrix<f64>, d: usize, weight: f64) -> DMatrix<f64> {
    let n = sigma.nrows();
    let mut p = DMatrix::zeros(d, d);
    p.view_mut((0, 0), (n, n)).copy_from(&(sigma * (2.0 * weight)));
    p
}

/// `min x'Σx - μ'x + (k u + Σ v)`.
pub fn build_single_objective(instance: &KsumInstance) -> QpProblem {
    build_scalarized(instance, [1.0, 1.0, 1.0]).expect("unit weights are valid")
}

/// `min λ1 x'Σx - λ2 μ'x + λ3 (k u + Σ v)`.
pub fn build_scalarized(instance: &KsumInstance, lambda: [f64; 3]) -> Result<QpProblem> {
    if lambda.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::InvalidArgument(format!("weights {lambda:?} must be finite and nonnegative")));
    }
    if lambda.iter().all(|l| *l == 0.0) {
        return Err(Error::InvalidArgument("at least one weight must be positive".into()));
    }
    let lay = instance.layout();
    let d = lay.dim();
    let p = variance_block(&instance.sigma, d, lambda[0]);
    let mut q = DVector::zeros(d);
    for j in lay.x() {
        q[j] = -lambda[1] * instance.mu[j];
    }
    for (j, c) in score_cost_row(instance).into_iter().enumerate().skip(lay.n) {
        q[j] = lambda[2] * c;
    }
    Ok(dual_block(instance, p, q))
}

/// `min x'Σx` with `μ'x >= mu_bar` and `k u + Σ v <= gamma_bar`.
pub fn build_epsilon_constraint(instance: &KsumInstance, mu_bar: f64, gamma_bar: f64) -> QpProblem {
    let d = instance.layout().dim();
    let p = variance_block(&instance.sigma, d, 1.0);
    let mut problem = dual_block(instance, p, DVector::zeros(d));
    problem.push_inequality(&return_floor_row(&instance.mu, d), -mu_bar);
    problem.push_inequality(&score_cost_row(instance), gamma_bar);
    problem
}

/// `min k u + Σ v`, optionally with `μ'x >= mu_bar`.
pub fn build_min_score(instance: &KsumInstance, mu_bar: Option<f64>) -> QpProblem {
    let d = instance.layout().dim();
    let q = DVector::from_vec(score_cost_row(instance));
    let mut problem = dual_block(instance, DMatrix::zeros(d, d), q);
    if let Some(mb) = mu_bar {
        problem.push_inequality(&return_floor_row(&instance.mu, d), -mb);
    }
    problem
}

/// `min x'Σx` over the simplex in `x` alone, optionally with `μ'x >= mu_bar`.
pub fn build_min_variance(sigma: &DMatrix<f64>, mu: &DVector<f64>, mu_bar: Option<f64>) -> Result<QpProblem> {
    let n = mu.len();
    if sigma.shape() != (n, n) || n == 0 {
        return Err(Error::Shape(format!(
            "sigma is {}x{}, mu has length {n}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let sigma = linalg::repair_psd(sigma, "sigma")?;
    let mut problem = QpProblem::new(sigma * 2.0, DVector::zeros(n))
        .with_equalities(DMatrix::from_element(1, n, 1.0), DVector::from_element(1, 1.0))
        .with_bounds(Bounds::nonnegative(n));
    if let Some(mb) = mu_bar {
        problem.push_inequality(&return_floor_row(mu, n), -mb);
    }
    Ok(problem)
}

/// Clamps negative round-off to zero and rescales onto the simplex.
pub fn clean_weights(x: &DVector<f64>) -> DVector<f64> {
    let clamped = x.map(|v| v.max(0.0));
    let total = clamped.sum();
    if total > 0.0 {
        clamped / total
    } else {
        DVector::from_element(x.len(), 1.0 / x.len() as f64)
    }
}
