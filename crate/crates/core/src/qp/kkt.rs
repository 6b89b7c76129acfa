use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{QpProblem, QpSolution, SolverSettings};

/// Max-norm KKT residuals of a primal-dual pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `|P y + q + A_eq' l + A_in' mu + dual_bounds|_inf`
    pub stationarity: f64,
    /// Largest equality, inequality or bound violation.
    pub primal: f64,
    /// Largest negative part of an inequality multiplier (or wrong-signed bound multiplier).
    pub dual: f64,
    /// `max_i |mu_i (A_in y - b_in)_i|`, bounds included.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn within(&self, settings: &SolverSettings) -> bool {
        self.primal <= settings.tol_feas
            && self.stationarity <= settings.tol_opt
            && self.dual <= settings.tol_opt
            && self.complementarity <= settings.tol_opt
    }

    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

/// Recomputes the residuals of `solution` against `problem`.
pub fn check_kkt(problem: &QpProblem, solution: &QpSolution) -> KktResiduals {
    residuals(
        problem,
        &solution.y_star,
        &solution.dual_eq,
        &solution.dual_in,
        &solution.dual_bounds,
    )
}

pub(crate) fn residuals(
    problem: &QpProblem,
    y: &DVector<f64>,
    dual_eq: &DVector<f64>,
    dual_in: &DVector<f64>,
    dual_bounds: &DVector<f64>,
) -> KktResiduals {
    let d = problem.dim();
    let mut grad = &problem.p * y + &problem.q;
    if dual_eq.len() == problem.a_eq.nrows() {
        grad += problem.a_eq.tr_mul(dual_eq);
    }
    if dual_in.len() == problem.a_in.nrows() {
        grad += problem.a_in.tr_mul(dual_in);
    }
    if dual_bounds.len() == d {
        grad += dual_bounds;
    }
    let stationarity = grad.amax();

    let mut primal = 0.0_f64;
    let mut dual = 0.0_f64;
    let mut complementarity = 0.0_f64;

    if problem.a_eq.nrows() > 0 {
        primal = primal.max((&problem.a_eq * y - &problem.b_eq).amax());
    }
    if problem.a_in.nrows() > 0 {
        let slack = &problem.a_in * y - &problem.b_in;
        for (i, r) in slack.iter().enumerate() {
            primal = primal.max(r.max(0.0));
            let mu = dual_in.get(i).copied().unwrap_or(0.0);
            dual = dual.max((-mu).max(0.0));
            complementarity = complementarity.max((mu * r).abs());
        }
    }
    if let Some(b) = &problem.bounds {
        for j in 0..d {
            let (lo, hi) = (b.lower[j], b.upper[j]);
            if lo.is_finite() {
                primal = primal.max(lo - y[j]);
            }
            if hi.is_finite() {
                primal = primal.max(y[j] - hi);
            }
            let z = dual_bounds.get(j).copied().unwrap_or(0.0);
            if z > 0.0 {
                if hi.is_finite() {
                    complementarity = complementarity.max((z * (y[j] - hi)).abs());
                } else {
                    dual = dual.max(z);
                }
            } else if z < 0.0 {
                if lo.is_finite() {
                    complementarity = complementarity.max((z * (y[j] - lo)).abs());
                } else {
                    dual = dual.max(-z);
                }
            }
        }
    } else if dual_bounds.len() == d {
        dual = dual.max(dual_bounds.amax());
    }

    KktResiduals {
        stationarity,
        primal: primal.max(0.0),
        dual,
        complementarity,
    }
}
