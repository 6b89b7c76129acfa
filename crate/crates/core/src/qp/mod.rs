//! Dense convex quadratic programming.
//!
//! Problems have the form
//!
//! ```text
//!     minimize    1/2 y' P y + q' y
//!     subject to  A_eq y  = b_eq
//!                 A_in y <= b_in
//!                 lower <= y <= upper      (optional)
//! ```
//!
//! and are solved by a Mehrotra predictor-corrector interior-point method
//! followed by an active-set polish. The dual sign convention is the one
//! used by [`check_kkt`]: at an optimum
//! `P y + q + A_eq' dual_eq + A_in' dual_in + dual_bounds = 0`, with
//! `dual_in >= 0` and `dual_bounds[j] > 0` only on an active upper bound,
//! `< 0` only on an active lower bound.

mod dump;
mod kkt;
mod solver;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub use dump::{read_dump, write_dump};
pub use kkt::{check_kkt, KktResiduals};
pub use solver::solve;

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn nonnegative(d: usize) -> Self {
        Self {
            lower: vec![0.0; d],
            upper: vec![f64::INFINITY; d],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub bounds: Option<Bounds>,
}

impl QpProblem {
    /// Unconstrained problem in `d = q.len()` variables.
    pub fn new(p: DMatrix<f64>, q: DVector<f64>) -> Self {
        let d = q.len();
        Self {
            p,
            q,
            a_eq: DMatrix::zeros(0, d),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, d),
            b_in: DVector::zeros(0),
            bounds: None,
        }
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_in = a;
        self.b_in = b;
        self
    }

    pub fn with_bounds(mut self, bounds: Bounds) -> Self {
        self.bounds = Some(bounds);
        self
    }

    /// Appends one inequality row `a' y <= b`.
    pub fn push_inequality(&mut self, a: &[f64], b: f64) {
        let g = self.a_in.nrows();
        let d = self.dim();
        let mut rows = self.a_in.clone().resize_vertically(g + 1, 0.0);
        for (j, v) in a.iter().enumerate().take(d) {
            rows[(g, j)] = *v;
        }
        self.a_in = rows;
        self.b_in = self.b_in.clone().resize_vertically(g + 1, b);
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn objective(&self, y: &DVector<f64>) -> f64 {
        0.5 * linalg::quad_form(&self.p, y) + self.q.dot(y)
    }

    /// Shape, symmetry and convexity checks.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.p.shape() != (d, d) {
            return Err(Error::Shape(format!("P is {:?}, expected {d}x{d}", self.p.shape())));
        }
        if self.a_eq.ncols() != d || self.a_eq.nrows() != self.b_eq.len() {
            return Err(Error::Shape("equality block has inconsistent shape".into()));
        }
        if self.a_in.ncols() != d || self.a_in.nrows() != self.b_in.len() {
            return Err(Error::Shape("inequality block has inconsistent shape".into()));
        }
        if let Some(b) = &self.bounds {
            if b.lower.len() != d || b.upper.len() != d {
                return Err(Error::Shape("bounds must have one entry per variable".into()));
            }
            if b.lower.iter().zip(&b.upper).any(|(l, u)| l > u || l.is_nan() || u.is_nan()) {
                return Err(Error::InvalidArgument("lower bound above upper bound".into()));
            }
        }
        let finite = self.p.iter().chain(self.q.iter()).chain(self.a_eq.iter()).chain(self.b_eq.iter())
            .chain(self.a_in.iter()).chain(self.b_in.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("problem data must be finite".into()));
        }
        let scale = self.p.amax().max(1.0);
        if linalg::max_asymmetry(&self.p) > 1e-12 * scale {
            return Err(Error::InvalidArgument("P is not symmetric".into()));
        }
        if d > 0 && self.p.amax() > 0.0 {
            let lambda_min = linalg::min_eigenvalue(&self.p);
            if lambda_min < -linalg::PSD_TOLERANCE {
                return Err(Error::NotPositiveDefinite(format!(
                    "P has smallest eigenvalue {lambda_min:e}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::MaxIterations => "max-iterations",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub y_star: DVector<f64>,
    pub objective: f64,
    /// For `Infeasible` the dual vectors hold a Farkas certificate instead.
    pub dual_eq: DVector<f64>,
    pub dual_in: DVector<f64>,
    pub dual_bounds: DVector<f64>,
    pub status: SolveStatus,
    pub kkt_residuals: KktResiduals,
    pub iterations: usize,
    pub polished: bool,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// The primal vector of an optimal solve, an error otherwise.
    pub fn optimal_point(&self) -> Result<&DVector<f64>> {
        match self.status {
            SolveStatus::Optimal => Ok(&self.y_star),
            SolveStatus::Infeasible => Err(Error::Infeasible("QP has no feasible point".into())),
            SolveStatus::MaxIterations => Err(Error::NotConverged(format!(
                "stopped after {} iterations with residuals {:?}",
                self.iterations, self.kkt_residuals
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Max-norm bound on primal constraint violation.
    pub tol_feas: f64,
    /// Max-norm bound on stationarity, dual feasibility and complementarity.
    pub tol_opt: f64,
    pub max_iterations: usize,
    /// Refine the interior-point iterate by solving the KKT system on its
    /// estimated active set.
    pub polish: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_feas: 1e-8,
            tol_opt: 1e-8,
            max_iterations: 50_000,
            polish: true,
        }
    }
}
