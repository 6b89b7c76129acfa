//! Rolling-window out-of-sample evaluation.
//!
//! At every rebalance the moments are estimated on the trailing
//! `in_sample_length` returns, each strategy is solved, and its weights are
//! held constant for the next `rebalance_period` returns. The rebalance at
//! return row `q` uses rows `q - in_sample_length .. q` and is dated at the
//! price date closing row `q - 1`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, StrategySpec};
use crate::data::{sample_moments, MarketData, DATE_FORMAT};
use crate::error::{Error, Result};
use crate::frontier::{self, MuRange, PointStatus};
use crate::ksum::KsumInstance;
use crate::qp::SolverSettings;
use crate::scores::{self, NonEsgPanel, NormalizeOptions, ScoreHistory};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreAlignment {
    /// The most recent panel dated on or before the rebalance date.
    #[default]
    LastObservationCarriedForward,
}

fn default_in_sample() -> usize {
    500
}

fn default_rebalance() -> usize {
    21
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    #[serde(default = "default_in_sample")]
    pub in_sample_length: usize,
    #[serde(default = "default_rebalance")]
    pub rebalance_period: usize,
    pub strategies: Vec<StrategySpec>,
    #[serde(default)]
    pub score_alignment: ScoreAlignment,
    /// Agency subset, in the given order; all agencies when absent.
    #[serde(default)]
    pub agencies: Option<Vec<String>>,
    #[serde(default)]
    pub normalize: NormalizeOptions,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl BacktestConfig {
    pub fn new(strategies: Vec<StrategySpec>) -> Self {
        Self {
            in_sample_length: default_in_sample(),
            rebalance_period: default_rebalance(),
            strategies,
            score_alignment: ScoreAlignment::default(),
            agencies: None,
            normalize: NormalizeOptions::default(),
            solver: SolverSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_sample_length < 2 {
            return Err(Error::Config("in_sample_length must be at least 2".into()));
        }
        if self.rebalance_period < 1 {
            return Err(Error::Config("rebalance_period must be at least 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("no strategies configured".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.strategies {
            s.validate()?;
            if !seen.insert(s.label()) {
                return Err(Error::Config(format!("duplicate strategy `{}`", s.label())));
            }
        }
        Ok(())
    }
}

/// Non-ESG panel in force on `date`, with assets in `asset_ids` order.
pub fn align_scores(
    history: &ScoreHistory,
    date: NaiveDate,
    asset_ids: &[String],
    agencies: Option<&[String]>,
    options: NormalizeOptions,
) -> Result<NonEsgPanel> {
    let panel = history
        .as_of(date)
        .ok_or_else(|| Error::Config(format!("no score panel in force on {}", date.format(DATE_FORMAT))))?;
    let panel = panel.align_to(asset_ids)?;
    let panel = match agencies {
        Some(ids) => panel.select_agencies(ids)?,
        None => panel,
    };
    scores::normalize(&panel, options)
}

#[derive(Debug, Clone, PartialEq)]
pub enum WindowOutcome {
    Solved,
    /// Solve failed; previous weights held.
    Carried(String),
    /// Solve failed at the first window; equal weights used.
    FallbackEqualWeight(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowDiagnostic {
    pub date: NaiveDate,
    pub outcome: WindowOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRun {
    pub spec: StrategySpec,
    pub label: String,
    /// One entry per out-of-sample day.
    pub returns: Vec<f64>,
    /// `wealth[0] = 1`, `wealth[t] = wealth[t - 1] (1 + returns[t - 1])`.
    pub wealth: Vec<f64>,
    /// Weights chosen at each rebalance.
    pub weights: Vec<DVector<f64>>,
    pub diagnostics: Vec<WindowDiagnostic>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub asset_ids: Vec<String>,
    /// Date of each out-of-sample return.
    pub dates: Vec<NaiveDate>,
    pub rebalance_dates: Vec<NaiveDate>,
    /// Benchmark return on each out-of-sample day.
    pub benchmark: Vec<f64>,
    pub strategies: Vec<StrategyRun>,
}

impl BacktestReport {
    pub fn strategy(&self, label: &str) -> Option<&StrategyRun> {
        self.strategies.iter().find(|s| s.label == label)
    }

    /// Writes `returns_<label>.csv`, `weights_<label>.csv` and `diagnostics.csv`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for run in &self.strategies {
            let path = dir.join(format!("returns_{}.csv", run.label));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["date", "return", "wealth", "benchmark"])?;
            for (t, r) in run.returns.iter().enumerate() {
                w.write_record([
                    self.dates[t].format(DATE_FORMAT).to_string(),
                    format!("{r}"),
                    format!("{}", run.wealth[t + 1]),
                    format!("{}", self.benchmark[t]),
                ])?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;

            let path = dir.join(format!("weights_{}.csv", run.label));
            let mut w = csv::Writer::from_path(&path)?;
            let mut header = vec!["date".to_string()];
            header.extend(self.asset_ids.iter().cloned());
            w.write_record(&header)?;
            for (q, x) in run.weights.iter().enumerate() {
                let mut rec = vec![self.rebalance_dates[q].format(DATE_FORMAT).to_string()];
                rec.extend(x.iter().map(|v| format!("{v}")));
                w.write_record(&rec)?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("diagnostics.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["strategy", "date", "outcome", "message"])?;
        for run in &self.strategies {
            for d in &run.diagnostics {
                let (outcome, msg) = match &d.outcome {
                    WindowOutcome::Solved => ("solved", ""),
                    WindowOutcome::Carried(m) => ("carried", m.as_str()),
                    WindowOutcome::FallbackEqualWeight(m) => ("fallback-equal-weight", m.as_str()),
                };
                w.write_record([run.label.as_str(), &d.date.format(DATE_FORMAT).to_string(), outcome, msg])?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    /// Number of windows, over all strategies, that did not solve.
    pub fn n_failures(&self) -> usize {
        self.strategies
            .iter()
            .flat_map(|s| &s.diagnostics)
            .filter(|d| d.outcome != WindowOutcome::Solved)
            .count()
    }
}

/// Inputs shared by every strategy at one rebalance.
pub struct WindowInputs<'a> {
    pub sigma: &'a DMatrix<f64>,
    pub mu: &'a DVector<f64>,
    pub panel: &'a NonEsgPanel,
    pub settings: &'a SolverSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum RangeKey {
    K(usize),
    Agency(usize),
}

fn agency_index(panel: &NonEsgPanel, agency: Option<&String>) -> Result<usize> {
    match agency {
        None => Ok(0),
        Some(a) => panel
            .agency_ids
            .iter()
            .position(|id| id == a)
            .ok_or_else(|| Error::Config(format!("unknown agency `{a}`"))),
    }
}

fn esg_row(panel: &NonEsgPanel, i: usize) -> DVector<f64> {
    DVector::from_fn(panel.n_assets(), |j, _| 1.0 - panel.s[(i, j)])
}

fn range_key(spec: &StrategySpec, panel: &NonEsgPanel) -> Result<Option<RangeKey>> {
    Ok(match spec {
        StrategySpec::KWorst { k, .. } => Some(RangeKey::K(*k)),
        StrategySpec::MvEsg { agency, .. } => Some(RangeKey::Agency(agency_index(panel, agency.as_ref())?)),
        _ => None,
    })
}

fn key_instance(key: RangeKey, w: &WindowInputs) -> Result<KsumInstance> {
    match key {
        RangeKey::K(k) => KsumInstance::new(w.sigma.clone(), w.mu.clone(), w.panel.s.clone(), k),
        RangeKey::Agency(i) => {
            let s = DMatrix::from_fn(1, w.panel.n_assets(), |_, j| w.panel.s[(i, j)]);
            KsumInstance::new(w.sigma.clone(), w.mu.clone(), s, 1)
        }
    }
}

/// Weights of `spec` given the window inputs and, for target-based
/// strategies, the return range of the matching instance.
fn strategy_weights(spec: &StrategySpec, w: &WindowInputs, ranges: &BTreeMap<RangeKey, Result<MuRange, String>>) -> Result<DVector<f64>> {
    let range_of = |key: RangeKey| -> Result<MuRange> {
        ranges[&key].clone().map_err(Error::NotConverged)
    };
    match spec {
        StrategySpec::GMinV => baselines::gmin_v(w.sigma, w.settings),
        StrategySpec::EqualWeighted => baselines::equally_weighted(w.mu.len()),
        StrategySpec::RiskParity => baselines::risk_parity(w.sigma),
        StrategySpec::MostDiversified => baselines::most_diversified(w.sigma, w.settings),
        StrategySpec::MvEsg { agency, alpha, fraction } => {
            let i = agency_index(w.panel, agency.as_ref())?;
            let key = RangeKey::Agency(i);
            let inst = key_instance(key, w)?;
            let p = frontier::profile_at(&inst, &range_of(key)?, *alpha, *fraction, w.settings)?;
            baselines::mv_esg(w.sigma, w.mu, &esg_row(w.panel, i), p.mu_bar, 1.0 - p.gamma_bar, w.settings)
        }
        StrategySpec::KWorst { k, alpha, fraction } => {
            let key = RangeKey::K(*k);
            let inst = key_instance(key, w)?;
            let p = frontier::profile_at(&inst, &range_of(key)?, *alpha, *fraction, w.settings)?;
            let point = frontier::solve_point(&inst, p.mu_bar, p.gamma_bar, w.settings);
            match (point.status, point.weights) {
                (PointStatus::Optimal, Some(x)) => Ok(x),
                (status, _) => Err(Error::NotConverged(format!("epsilon-constraint solve: {}", status.as_str()))),
            }
        }
    }
}

/// Solves every strategy of `specs` on one window, in parallel.
pub fn solve_window(specs: &[StrategySpec], w: &WindowInputs) -> Vec<Result<DVector<f64>>> {
    let mut keys: Vec<RangeKey> = Vec::new();
    let mut key_errors: Vec<Option<Error>> = Vec::with_capacity(specs.len());
    for s in specs {
        match range_key(s, w.panel) {
            Ok(Some(k)) => {
                if !keys.contains(&k) {
                    keys.push(k);
                }
                key_errors.push(None);
            }
            Ok(None) => key_errors.push(None),
            Err(e) => key_errors.push(Some(e)),
        }
    }
    let ranges: BTreeMap<RangeKey, Result<MuRange, String>> = keys
        .par_iter()
        .map(|&key| {
            let r = key_instance(key, w)
                .and_then(|inst| frontier::compute_mu_range(&inst, w.settings))
                .map_err(|e| format!("return range: {e}"));
            (key, r)
        })
        .collect();
    specs
        .par_iter()
        .zip(key_errors.into_par_iter())
        .map(|(s, err)| match err {
            Some(e) => Err(e),
            None => strategy_weights(s, w, &ranges),
        })
        .collect()
}

fn check_roster(specs: &[StrategySpec], panel: &NonEsgPanel) -> Result<()> {
    let m = panel.n_agencies();
    for s in specs {
        match s {
            StrategySpec::KWorst { k, .. } if *k > m => {
                return Err(Error::Config(format!("{}: k = {k} exceeds the {m} agencies", s.label())));
            }
            StrategySpec::MvEsg { agency, .. } => {
                agency_index(panel, agency.as_ref())?;
            }
            _ => {}
        }
    }
    Ok(())
}

/// Runs the rolling-window evaluation with the cross-sectional mean return as benchmark.
pub fn run(data: &MarketData, scores: &ScoreHistory, config: &BacktestConfig) -> Result<BacktestReport> {
    run_with_benchmark(data, scores, config, None)
}

/// As [`run`], with an explicit benchmark return series aligned to the return rows of `data`.
pub fn run_with_benchmark(
    data: &MarketData,
    scores: &ScoreHistory,
    config: &BacktestConfig,
    benchmark: Option<&[f64]>,
) -> Result<BacktestReport> {
    config.validate()?;
    let returns = data.returns();
    let (t_ret, n) = returns.shape();
    let l_in = config.in_sample_length;
    let h = config.rebalance_period;
    if t_ret < l_in + h {
        return Err(Error::InsufficientData(format!(
            "{t_ret} returns cannot cover an in-sample window of {l_in} and a holding period of {h}"
        )));
    }
    if let Some(b) = benchmark {
        if b.len() != t_ret {
            return Err(Error::Shape(format!("benchmark has {} returns, data has {t_ret}", b.len())));
        }
    }
    let dates = data.dates();
    let rebalance_rows: Vec<usize> = (l_in..t_ret).step_by(h).collect();
    let n_strategies = config.strategies.len();
    let mut weights: Vec<Vec<DVector<f64>>> = vec![Vec::new(); n_strategies];
    let mut diagnostics: Vec<Vec<WindowDiagnostic>> = vec![Vec::new(); n_strategies];
    let mut oos_returns: Vec<Vec<f64>> = vec![Vec::new(); n_strategies];

    for (w, &q) in rebalance_rows.iter().enumerate() {
        let date = dates[q];
        let block = returns.rows(q - l_in, l_in).into_owned();
        let (mu, sigma) = sample_moments(&block)?;
        let panel = align_scores(scores, date, data.asset_ids(), config.agencies.as_deref(), config.normalize)?;
        let inputs = WindowInputs {
            sigma: &sigma,
            mu: &mu,
            panel: &panel,
            settings: &config.solver,
        };
        if w == 0 {
            check_roster(&config.strategies, &panel)?;
        }
        let solved = solve_window(&config.strategies, &inputs);
        let end = (q + h).min(t_ret);
        for (s, result) in solved.into_iter().enumerate() {
            let label = config.strategies[s].label();
            let (x, outcome) = match (result, weights[s].last()) {
                (Ok(x), _) => (x, WindowOutcome::Solved),
                (Err(e), Some(prev)) => {
                    warn!("{label} at {date}: {e}; holding previous weights");
                    (prev.clone(), WindowOutcome::Carried(e.to_string()))
                }
                (Err(e), None) => {
                    warn!("{label} at {date}: {e}; using equal weights");
                    (baselines::equally_weighted(n)?, WindowOutcome::FallbackEqualWeight(e.to_string()))
                }
            };
            for t in q..end {
                oos_returns[s].push(returns.row(t).transpose().dot(&x));
            }
            weights[s].push(x);
            diagnostics[s].push(WindowDiagnostic { date, outcome });
        }
        info!("rebalanced at {date}");
    }

    let oos_rows = l_in..t_ret;
    let bench: Vec<f64> = match benchmark {
        Some(b) => oos_rows.clone().map(|t| b[t]).collect(),
        None => oos_rows.clone().map(|t| returns.row(t).mean()).collect(),
    };
    let strategies = config
        .strategies
        .iter()
        .enumerate()
        .map(|(s, spec)| {
            let r = std::mem::take(&mut oos_returns[s]);
            StrategyRun {
                spec: spec.clone(),
                label: spec.label(),
                wealth: wealth_path(&r),
                returns: r,
                weights: std::mem::take(&mut weights[s]),
                diagnostics: std::mem::take(&mut diagnostics[s]),
            }
        })
        .collect();
    Ok(BacktestReport {
        asset_ids: data.asset_ids().to_vec(),
        dates: oos_rows.map(|t| dates[t + 1]).collect(),
        rebalance_dates: rebalance_rows.iter().map(|&q| dates[q]).collect(),
        benchmark: bench,
        strategies,
    })
}

/// `W_0 = 1`, `W_t = W_{t-1} (1 + R_t)`.
pub fn wealth_path(returns: &[f64]) -> Vec<f64> {
    let mut w = Vec::with_capacity(returns.len() + 1);
    w.push(1.0);
    for r in returns {
        let last = *w.last().expect("non-empty");
        w.push(last * (1.0 + r));
    }
    w
}
