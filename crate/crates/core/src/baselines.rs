//! Comparison strategies: GMinV, equal weights, risk parity, most
//! diversified and single-agency mean-variance-ESG.
//!
//! Every function returns weights on the simplex: negative round-off is
//! clamped to zero and the vector is rescaled to sum to one.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontier::{self, Profile, DEFAULT_GAMMA_FRACTION};
use crate::ksum::{self, KsumInstance};
use crate::linalg;
use crate::qp::{self, Bounds, QpProblem, SolveStatus, SolverSettings};

fn default_fraction() -> f64 {
    DEFAULT_GAMMA_FRACTION
}

/// One entry of the strategy roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum StrategySpec {
    #[serde(rename = "GMinV")]
    GMinV,
    #[serde(rename = "EW")]
    EqualWeighted,
    #[serde(rename = "RP")]
    RiskParity,
    #[serde(rename = "MDP")]
    MostDiversified,
    /// Return level `alpha` in `[0, 1)`, ESG target at `fraction` of the way
    /// from the greenest attainable level towards the minimum-variance one.
    #[serde(rename = "MV-ESG")]
    MvEsg {
        #[serde(default)]
        agency: Option<String>,
        alpha: f64,
        #[serde(default = "default_fraction")]
        fraction: f64,
    },
    #[serde(rename = "KWorst")]
    KWorst {
        k: usize,
        alpha: f64,
        #[serde(default = "default_fraction")]
        fraction: f64,
    },
}

fn level_label(alpha: f64) -> String {
    let idx = alpha * 4.0;
    if idx.fract() == 0.0 && (0.0..4.0).contains(&idx) {
        format!("{}", idx as usize + 1)
    } else {
        format!("a{alpha}")
    }
}

impl StrategySpec {
    /// Table label, e.g. `Sust_2` or `Sust_3_2Worst`.
    pub fn label(&self) -> String {
        match self {
            StrategySpec::GMinV => "GMinV".into(),
            StrategySpec::EqualWeighted => "EW".into(),
            StrategySpec::RiskParity => "RP".into(),
            StrategySpec::MostDiversified => "MDP".into(),
            StrategySpec::MvEsg { agency: None, alpha, .. } => format!("Sust_{}", level_label(*alpha)),
            StrategySpec::MvEsg {
                agency: Some(a), alpha, ..
            } => format!("Sust_{}_{a}", level_label(*alpha)),
            StrategySpec::KWorst { k, alpha, .. } => format!("Sust_{}_{k}Worst", level_label(*alpha)),
        }
    }

    /// GMinV, EW, RP, MDP, the four MV-ESG levels and four k-worst levels per `k`.
    pub fn roster(ks: &[usize]) -> Vec<StrategySpec> {
        let mut out = vec![
            StrategySpec::GMinV,
            StrategySpec::EqualWeighted,
            StrategySpec::RiskParity,
            StrategySpec::MostDiversified,
        ];
        for &alpha in &frontier::PROFILE_ALPHAS {
            out.push(StrategySpec::MvEsg {
                agency: None,
                alpha,
                fraction: DEFAULT_GAMMA_FRACTION,
            });
        }
        for &k in ks {
            for &alpha in &frontier::PROFILE_ALPHAS {
                out.push(StrategySpec::KWorst {
                    k,
                    alpha,
                    fraction: DEFAULT_GAMMA_FRACTION,
                });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let check = |alpha: f64, fraction: f64| {
            if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&fraction) {
                return Err(Error::Config(format!(
                    "{}: alpha and fraction must lie in [0, 1]",
                    self.label()
                )));
            }
            Ok(())
        };
        match self {
            StrategySpec::MvEsg { alpha, fraction, .. } => check(*alpha, *fraction),
            StrategySpec::KWorst { k, alpha, fraction } => {
                if *k == 0 {
                    return Err(Error::Config("KWorst needs k >= 1".into()));
                }
                check(*alpha, *fraction)
            }
            _ => Ok(()),
        }
    }
}

pub fn equally_weighted(n: usize) -> Result<DVector<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one asset".into()));
    }
    Ok(DVector::from_element(n, 1.0 / n as f64))
}

fn optimal(problem: &QpProblem, settings: &SolverSettings, what: &str) -> Result<DVector<f64>> {
    let sol = qp::solve(problem, settings)?;
    match sol.status {
        SolveStatus::Optimal => Ok(sol.y_star),
        SolveStatus::Infeasible => Err(Error::Infeasible(format!("{what} targets cannot be met"))),
        SolveStatus::MaxIterations => Err(Error::NotConverged(format!("{what} after {} iterations", sol.iterations))),
    }
}

pub fn gmin_v(sigma: &DMatrix<f64>, settings: &SolverSettings) -> Result<DVector<f64>> {
    let n = sigma.nrows();
    let problem = ksum::build_min_variance(sigma, &DVector::zeros(n), None)?;
    Ok(ksum::clean_weights(&optimal(&problem, settings, "GMinV")?))
}

/// Equal risk contributions `x_i (Σx)_i`, by damped Newton on
/// `1/2 y'Σy - (1/n) sum ln y_i` followed by rescaling.
pub fn risk_parity(sigma: &DMatrix<f64>) -> Result<DVector<f64>> {
    linalg::require_positive_definite(sigma, "risk parity covariance")?;
    let n = sigma.nrows();
    let b = 1.0 / n as f64;
    let objective = |y: &DVector<f64>| 0.5 * linalg::quad_form(sigma, y) - b * y.iter().map(|v| v.ln()).sum::<f64>();
    let mut y = DVector::from_fn(n, |i, _| 1.0 / sigma[(i, i)].sqrt());
    y *= 1.0 / (n as f64 * linalg::quad_form(sigma, &y)).sqrt();
    for _ in 0..200 {
        let sy = sigma * &y;
        let spread = y.component_mul(&sy).iter().map(|c| (c - b).abs()).fold(0.0, f64::max);
        if spread <= 1e-14 {
            break;
        }
        let grad = &sy - y.map(|v| b / v);
        let mut hess = sigma.clone();
        for i in 0..n {
            hess[(i, i)] += b / (y[i] * y[i]);
        }
        let step = hess
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("risk parity Newton system".into()))?
            .solve(&(-&grad));
        let decrement = -grad.dot(&step);
        if decrement <= 1e-30 {
            break;
        }
        let mut t = 1.0;
        while (0..n).any(|i| y[i] + t * step[i] <= 0.0) {
            t *= 0.5;
        }
        let f0 = objective(&y);
        while t > 1e-12 && objective(&(&y + &step * t)) > f0 - 0.25 * t * decrement {
            t *= 0.5;
        }
        y += &step * t;
    }
    Ok(ksum::clean_weights(&y))
}

/// `(sum_j x_j σ_j) / sqrt(x'Σx)`.
pub fn diversification_ratio(sigma: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let vols = sigma.diagonal().map(f64::sqrt);
    vols.dot(x) / linalg::quad_form(sigma, x).sqrt()
}

/// Maximum diversification ratio, via `min z'Σz s.t. σ'z = 1, z >= 0`.
/// When every portfolio has ratio one (perfectly correlated assets) the
/// lowest-index vertex is returned.
pub fn most_diversified(sigma: &DMatrix<f64>, settings: &SolverSettings) -> Result<DVector<f64>> {
    let sigma = linalg::repair_psd(sigma, "most diversified covariance")?;
    let n = sigma.nrows();
    if n == 0 || sigma.diagonal().iter().any(|v| *v <= 0.0) {
        return Err(Error::NotPositiveDefinite("every asset needs positive variance".into()));
    }
    let vols = sigma.diagonal().map(f64::sqrt);
    let problem = QpProblem::new(&sigma * 2.0, DVector::zeros(n))
        .with_equalities(DMatrix::from_row_slice(1, n, vols.as_slice()), DVector::from_element(1, 1.0))
        .with_bounds(Bounds::nonnegative(n));
    let x = ksum::clean_weights(&optimal(&problem, settings, "most diversified")?);
    if diversification_ratio(&sigma, &x) <= 1.0 + 1e-12 {
        let mut vertex = DVector::zeros(n);
        vertex[0] = 1.0;
        return Ok(vertex);
    }
    Ok(x)
}

/// `min x'Σx s.t. μ'x >= mu_bar, esg'x >= eta_bar`, simplex.
pub fn build_mv_esg(sigma: &DMatrix<f64>, mu: &DVector<f64>, esg_row: &DVector<f64>, mu_bar: f64, eta_bar: f64) -> Result<QpProblem> {
    if esg_row.len() != mu.len() {
        return Err(Error::Shape("ESG row and mu differ in length".into()));
    }
    if esg_row.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidArgument("ESG row must lie in [0, 1]".into()));
    }
    let mut problem = ksum::build_min_variance(sigma, mu, Some(mu_bar))?;
    let neg: Vec<f64> = esg_row.iter().map(|v| -v).collect();
    problem.push_inequality(&neg, -eta_bar);
    Ok(problem)
}

pub fn mv_esg(
    sigma: &DMatrix<f64>,
    mu: &DVector<f64>,
    esg_row: &DVector<f64>,
    mu_bar: f64,
    eta_bar: f64,
    settings: &SolverSettings,
) -> Result<DVector<f64>> {
    let problem = build_mv_esg(sigma, mu, esg_row, mu_bar, eta_bar)?;
    Ok(ksum::clean_weights(&optimal(&problem, settings, "MV-ESG")?))
}

/// MV-ESG targets `(mu_bar, eta_bar)` built like the k-worst profiles on the
/// single Non-ESG row `1 - esg` (where the k-worst score is just `s'x`).
pub fn mv_esg_targets(
    sigma: &DMatrix<f64>,
    mu: &DVector<f64>,
    esg_row: &DVector<f64>,
    alpha: f64,
    fraction: f64,
    settings: &SolverSettings,
) -> Result<(f64, f64)> {
    let instance = single_row_instance(sigma, mu, esg_row)?;
    let range = frontier::compute_mu_range(&instance, settings)?;
    let Profile { mu_bar, gamma_bar, .. } = frontier::profile_at(&instance, &range, alpha, fraction, settings)?;
    Ok((mu_bar, 1.0 - gamma_bar))
}

fn single_row_instance(sigma: &DMatrix<f64>, mu: &DVector<f64>, esg_row: &DVector<f64>) -> Result<KsumInstance> {
    let s = DMatrix::from_fn(1, esg_row.len(), |_, j| 1.0 - esg_row[j]);
    KsumInstance::new(sigma.clone(), mu.clone(), s, 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    #[test]
    fn equal_weights() {
        assert_eq!(equally_weighted(4).unwrap().as_slice(), &[0.25; 4]);
        assert_eq!(equally_weighted(1).unwrap().as_slice(), &[1.0]);
        for n in [3, 7, 99, 500] {
            assert!((equally_weighted(n).unwrap().sum() - 1.0).abs() <= 1e-12);
        }
        assert!(equally_weighted(0).is_err());
    }

    #[test]
    fn risk_parity_closed_forms() {
        let x = risk_parity(&DMatrix::identity(3, 3)).unwrap();
        assert!(x.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
        let x = risk_parity(&diag(&[0.04, 0.01])).unwrap();
        // proportional to 1/σ = (5, 10)
        assert!((x[0] - 1.0 / 3.0).abs() < 1e-12 && (x[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn risk_parity_rejects_singular() {
        let sigma = DMatrix::from_element(2, 2, 1.0);
        assert!(matches!(risk_parity(&sigma), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn mdp_diagonal_matches_inverse_vol() {
        let x = most_diversified(&diag(&[0.04, 0.01, 0.09]), &SolverSettings::default()).unwrap();
        let inv = DVector::from_vec(vec![5.0, 10.0, 10.0 / 3.0]);
        let want = &inv / inv.sum();
        assert!((x - want).amax() < 1e-7);
    }

    #[test]
    fn mdp_perfect_correlation_picks_first_vertex() {
        let sigma = DMatrix::from_row_slice(2, 2, &[0.04, 0.02, 0.02, 0.01]);
        let x = most_diversified(&sigma, &SolverSettings::default()).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn mv_esg_slack_target_is_min_variance() {
        let sigma = diag(&[0.04, 0.01, 0.09]);
        let mu = DVector::from_vec(vec![0.01, 0.02, 0.03]);
        let esg = DVector::from_vec(vec![0.9, 0.1, 0.5]);
        let settings = SolverSettings::default();
        let a = mv_esg(&sigma, &mu, &esg, 0.022, 0.0, &settings).unwrap();
        let problem = ksum::build_min_variance(&sigma, &mu, Some(0.022)).unwrap();
        let b = ksum::clean_weights(&qp::solve(&problem, &settings).unwrap().y_star);
        assert!((a - b).amax() < 1e-8);
    }

    #[test]
    fn mv_esg_max_target_is_greenest_vertex() {
        let sigma = diag(&[0.04, 0.01, 0.09]);
        let mu = DVector::from_vec(vec![0.03, 0.02, 0.01]);
        let esg = DVector::from_vec(vec![0.9, 0.1, 0.5]);
        let x = mv_esg(&sigma, &mu, &esg, 0.0, 0.9, &SolverSettings::default()).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn labels_follow_table_names() {
        let roster = StrategySpec::roster(&[2]);
        let labels: Vec<String> = roster.iter().map(StrategySpec::label).collect();
        assert_eq!(
            labels,
            [
                "GMinV",
                "EW",
                "RP",
                "MDP",
                "Sust_1",
                "Sust_2",
                "Sust_3",
                "Sust_4",
                "Sust_1_2Worst",
                "Sust_2_2Worst",
                "Sust_3_2Worst",
                "Sust_4_2Worst"
            ]
        );
    }
}
