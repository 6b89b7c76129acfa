//! Epsilon-constraint sweep of the (variance, return, k-worst score) surface.
//!
//! The return axis spans `[mu_min, mu_max]` with
//! `mu_min = max(return of GMinV, return of the min-score portfolio)` and
//! `mu_max = max_j mu_j`. At each return level the score axis spans
//! `[gamma_min, gamma_max]`: the smallest attainable k-worst score under the
//! return floor, and the k-worst score of the floor-constrained
//! minimum-variance portfolio.

use std::io::Write;

use log::warn;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ksum::{self, KsumInstance};
use crate::qp::{self, QpSolution, SolveStatus, SolverSettings};

/// Relative width below which a range is treated as a single point.
const DEGENERATE_WIDTH: f64 = 1e-12;
/// Slack above which an epsilon constraint counts as not binding.
const BINDING_SLACK: f64 = 1e-6;

pub const DEFAULT_GRID: usize = 20;
pub const DEFAULT_GAMMA_FRACTION: f64 = 0.4;
pub const PROFILE_ALPHAS: [f64; 4] = [0.0, 0.25, 0.5, 0.75];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuRange {
    pub mu_min: f64,
    pub mu_max: f64,
    /// Return of the global minimum-variance portfolio.
    pub mu_min_v: f64,
    /// Return of the minimum k-worst score portfolio.
    pub mu_min_score: f64,
}

fn solved(problem: &qp::QpProblem, settings: &SolverSettings, what: &str) -> Result<QpSolution> {
    let sol = qp::solve(problem, settings)?;
    match sol.status {
        SolveStatus::Optimal => Ok(sol),
        SolveStatus::Infeasible => Err(Error::Infeasible(what.to_string())),
        SolveStatus::MaxIterations => Err(Error::NotConverged(what.to_string())),
    }
}

/// Minimum-variance weights, optionally with a return floor.
pub fn min_variance_weights(instance: &KsumInstance, mu_bar: Option<f64>, settings: &SolverSettings) -> Result<DVector<f64>> {
    let problem = ksum::build_min_variance(instance.sigma(), instance.mu(), mu_bar)?;
    let sol = solved(&problem, settings, "minimum-variance model")?;
    Ok(ksum::clean_weights(&sol.y_star))
}

/// Minimum k-worst score weights and the optimal score.
pub fn min_score_weights(instance: &KsumInstance, mu_bar: Option<f64>, settings: &SolverSettings) -> Result<(DVector<f64>, f64)> {
    let problem = ksum::build_min_score(instance, mu_bar);
    let sol = solved(&problem, settings, "minimum-score model")?;
    let (x, _, _) = instance.layout().split(&sol.y_star);
    Ok((ksum::clean_weights(&x), sol.objective))
}

pub fn compute_mu_range(instance: &KsumInstance, settings: &SolverSettings) -> Result<MuRange> {
    let mu_max = instance.mu().max();
    let mu_min_v = instance.expected_return(&min_variance_weights(instance, None, settings)?);
    let (x_score, _) = min_score_weights(instance, None, settings)?;
    let mu_min_score = instance.expected_return(&x_score);
    Ok(MuRange {
        mu_min: mu_min_v.max(mu_min_score).min(mu_max),
        mu_max,
        mu_min_v,
        mu_min_score,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaRange {
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Minimum-variance portfolio under the return floor.
    pub min_variance: DVector<f64>,
}

pub fn compute_gamma_range(instance: &KsumInstance, mu_bar: f64, settings: &SolverSettings) -> Result<GammaRange> {
    let (x_score, objective) = min_score_weights(instance, Some(mu_bar), settings)?;
    let x_var = min_variance_weights(instance, Some(mu_bar), settings)?;
    let gamma_max = ksum::kworst_oracle(instance, &x_var)?;
    // The exact score of the LP optimizer is attainable, the solver objective may sit just below it.
    let gamma_min = objective.max(ksum::kworst_oracle(instance, &x_score)?).min(gamma_max);
    Ok(GammaRange {
        gamma_min,
        gamma_max,
        min_variance: x_var,
    })
}

/// `n` evenly spaced points on `[lo, hi]`, or just `lo` when the interval is degenerate.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let width = hi - lo;
    if n <= 1 || width <= DEGENERATE_WIDTH * lo.abs().max(hi.abs()).max(1.0) {
        return vec![lo];
    }
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + width * i as f64 / (n - 1) as f64 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointStatus {
    Optimal,
    Infeasible,
    MaxIterations,
    Failed,
}

impl PointStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PointStatus::Optimal => "optimal",
            PointStatus::Infeasible => "infeasible",
            PointStatus::MaxIterations => "max-iterations",
            PointStatus::Failed => "failed",
        }
    }
}

impl From<SolveStatus> for PointStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Optimal => PointStatus::Optimal,
            SolveStatus::Infeasible => PointStatus::Infeasible,
            SolveStatus::MaxIterations => PointStatus::MaxIterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierPoint {
    pub mu_bar: f64,
    pub gamma_bar: f64,
    /// `None` unless the solve was optimal.
    pub weights: Option<DVector<f64>>,
    pub variance: f64,
    pub expected_return: f64,
    pub kworst_score: f64,
    pub status: PointStatus,
    /// Set when at least one epsilon constraint is slack at the solution.
    pub weakly_efficient: bool,
}

impl FrontierPoint {
    fn failed(mu_bar: f64, gamma_bar: f64, status: PointStatus) -> Self {
        Self {
            mu_bar,
            gamma_bar,
            weights: None,
            variance: f64::NAN,
            expected_return: f64::NAN,
            kworst_score: f64::NAN,
            status,
            weakly_efficient: false,
        }
    }
}

/// Solves one epsilon-constraint point.
pub fn solve_point(instance: &KsumInstance, mu_bar: f64, gamma_bar: f64, settings: &SolverSettings) -> FrontierPoint {
    let problem = ksum::build_epsilon_constraint(instance, mu_bar, gamma_bar);
    let sol = match qp::solve(&problem, settings) {
        Ok(s) => s,
        Err(e) => {
            warn!("frontier point ({mu_bar}, {gamma_bar}): {e}");
            return FrontierPoint::failed(mu_bar, gamma_bar, PointStatus::Failed);
        }
    };
    if sol.status != SolveStatus::Optimal {
        return FrontierPoint::failed(mu_bar, gamma_bar, sol.status.into());
    }
    let (x, _, _) = instance.layout().split(&sol.y_star);
    let x = ksum::clean_weights(&x);
    let expected_return = instance.expected_return(&x);
    let kworst_score = ksum::kworst_oracle(instance, &x).unwrap_or(f64::NAN);
    let weakly_efficient = expected_return - mu_bar > BINDING_SLACK || gamma_bar - kworst_score > BINDING_SLACK;
    FrontierPoint {
        mu_bar,
        gamma_bar,
        variance: instance.variance(&x),
        expected_return,
        kworst_score,
        weights: Some(x),
        status: PointStatus::Optimal,
        weakly_efficient,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierRow {
    pub mu_bar: f64,
    /// `None` when the range itself could not be computed.
    pub gamma_range: Option<(f64, f64)>,
    pub points: Vec<FrontierPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierSurface {
    pub mu_range: MuRange,
    pub gminv: DVector<f64>,
    pub rows: Vec<FrontierRow>,
}

impl FrontierSurface {
    pub fn points(&self) -> impl Iterator<Item = &FrontierPoint> {
        self.rows.iter().flat_map(|r| r.points.iter())
    }

    pub fn n_points(&self) -> usize {
        self.rows.iter().map(|r| r.points.len()).sum()
    }

    pub fn n_failed(&self) -> usize {
        self.points().filter(|p| p.status != PointStatus::Optimal).count()
    }

    pub fn failure_fraction(&self) -> f64 {
        let total = self.n_points();
        if total == 0 {
            return 0.0;
        }
        self.n_failed() as f64 / total as f64
    }

    /// Max-norm gap between the `(mu_min, gamma_max(mu_min))` cell and GMinV.
    pub fn gminv_gap(&self) -> Option<f64> {
        let cell = self.rows.first()?.points.last()?;
        Some((cell.weights.as_ref()? - &self.gminv).amax())
    }

    /// Largest max-norm gap between the `mu_max` row and the max-return vertex.
    pub fn max_return_row_gap(&self, instance: &KsumInstance) -> Option<f64> {
        let row = self.rows.last()?;
        let j = instance.mu().argmax().0;
        let mut vertex = DVector::zeros(instance.n_assets());
        vertex[j] = 1.0;
        row.points
            .iter()
            .map(|p| p.weights.as_ref().map(|w| (w - &vertex).amax()))
            .try_fold(0.0_f64, |acc, g| g.map(|g| acc.max(g)))
    }

    /// Plot-ready CSV, one line per grid point in grid order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["mu_bar", "gamma_bar", "variance", "exp_return", "kworst_score", "status"])?;
        for p in self.points() {
            let num = |v: f64| if v.is_finite() { format!("{v}") } else { "NA".to_string() };
            w.write_record([
                format!("{}", p.mu_bar),
                format!("{}", p.gamma_bar),
                num(p.variance),
                num(p.expected_return),
                num(p.kworst_score),
                p.status.as_str().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<frontier csv>", e))?;
        Ok(())
    }
}

/// Uniform `n_mu x n_gamma` epsilon-constraint sweep. Individual failures are
/// recorded in the points; only a failure of the return range aborts.
pub fn trace_surface(instance: &KsumInstance, n_mu: usize, n_gamma: usize, settings: &SolverSettings) -> Result<FrontierSurface> {
    if n_mu == 0 || n_gamma == 0 {
        return Err(Error::InvalidArgument("grid sizes must be positive".into()));
    }
    let mu_range = compute_mu_range(instance, settings)?;
    let gminv = min_variance_weights(instance, None, settings)?;
    let mu_grid = uniform_grid(mu_range.mu_min, mu_range.mu_max, n_mu);

    let ranges: Vec<Option<(f64, f64)>> = mu_grid
        .par_iter()
        .map(|&mb| match compute_gamma_range(instance, mb, settings) {
            Ok(r) => Some((r.gamma_min, r.gamma_max)),
            Err(e) => {
                warn!("gamma range at mu_bar = {mb}: {e}");
                None
            }
        })
        .collect();

    let cells: Vec<(usize, f64, f64)> = mu_grid
        .iter()
        .zip(&ranges)
        .enumerate()
        .flat_map(|(row, (&mb, range))| {
            let gammas = match range {
                Some((lo, hi)) => uniform_grid(*lo, *hi, n_gamma),
                None => Vec::new(),
            };
            gammas.into_iter().map(move |g| (row, mb, g))
        })
        .collect();
    let solved: Vec<(usize, FrontierPoint)> = cells
        .par_iter()
        .map(|&(row, mb, g)| (row, solve_point(instance, mb, g, settings)))
        .collect();

    let mut rows: Vec<FrontierRow> = mu_grid
        .iter()
        .zip(ranges)
        .map(|(&mu_bar, gamma_range)| FrontierRow {
            mu_bar,
            gamma_range,
            points: Vec::new(),
        })
        .collect();
    for (row, point) in solved {
        rows[row].points.push(point);
    }
    for row in rows.iter_mut().filter(|r| r.gamma_range.is_none()) {
        row.points.push(FrontierPoint::failed(row.mu_bar, f64::NAN, PointStatus::Failed));
    }
    Ok(FrontierSurface { mu_range, gminv, rows })
}

/// Target pair of one k-worst strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub alpha: f64,
    pub mu_bar: f64,
    pub gamma_bar: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

/// `mu_bar = mu_min + alpha (mu_max - mu_min)` and
/// `gamma_bar = gamma_min + fraction (gamma_max - gamma_min)` at that level.
pub fn profile_at(instance: &KsumInstance, mu_range: &MuRange, alpha: f64, fraction: f64, settings: &SolverSettings) -> Result<Profile> {
    let mu_bar = if alpha == 0.0 {
        mu_range.mu_min
    } else {
        mu_range.mu_min + alpha * (mu_range.mu_max - mu_range.mu_min)
    };
    let g = compute_gamma_range(instance, mu_bar, settings)?;
    Ok(Profile {
        alpha,
        mu_bar,
        gamma_bar: g.gamma_min + fraction * (g.gamma_max - g.gamma_min),
        gamma_min: g.gamma_min,
        gamma_max: g.gamma_max,
    })
}

/// The four low-to-high gain profiles at `alpha = 0, 1/4, 1/2, 3/4`.
pub fn select_profiles(instance: &KsumInstance, settings: &SolverSettings) -> Result<Vec<Profile>> {
    let mu_range = compute_mu_range(instance, settings)?;
    PROFILE_ALPHAS
        .iter()
        .map(|&a| profile_at(instance, &mu_range, a, DEFAULT_GAMMA_FRACTION, settings))
        .collect()
}
