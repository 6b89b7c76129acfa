//! Out-of-sample performance measures.
//!
//! A measure whose denominator vanishes is reported as `None` rather than as
//! an infinite or NaN value. A denominator counts as zero when it is at most
//! `1e-12` times the magnitude of the data it was computed from.
//!
//! Drawdowns and the Ulcer index take the out-of-sample wealth path without
//! the initial unit of wealth: the running peak starts at the first
//! out-of-sample value.

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backtest::{BacktestReport, StrategyRun};
use crate::error::{Error, Result};

pub type Metric = Option<f64>;

const ZERO: f64 = 1e-12;
pub const DEFAULT_HOLDING_THRESHOLD: f64 = 1e-6;
pub const DEFAULT_ROI_HORIZON: usize = 756;
pub const TAIL_FRACTION: f64 = 0.10;
pub const VAR_LEVEL: f64 = 0.05;

fn magnitude(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn is_zero(denominator: f64, scale: f64) -> bool {
    denominator.abs() <= ZERO * scale || denominator == 0.0
}

/// Arithmetic mean with one correction pass.
pub fn mean(values: &[f64]) -> Metric {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let rough = values.iter().sum::<f64>() / n;
    Some(rough + values.iter().map(|v| v - rough).sum::<f64>() / n)
}

/// Sample standard deviation, denominator `n - 1`.
pub fn std_dev(values: &[f64]) -> Metric {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

pub fn exp_ret(returns: &[f64]) -> Metric {
    mean(returns)
}

pub fn vol(returns: &[f64]) -> Metric {
    std_dev(returns)
}

/// Mean over standard deviation, zero risk-free rate.
pub fn sharpe(returns: &[f64]) -> Metric {
    let s = std_dev(returns)?;
    if is_zero(s, magnitude(returns)) {
        return None;
    }
    Some(mean(returns)? / s)
}

/// `DD_t = (W_t - max_{s <= t} W_s) / max_{s <= t} W_s`.
pub fn drawdowns(wealth: &[f64]) -> Vec<f64> {
    let mut peak = f64::NEG_INFINITY;
    wealth
        .iter()
        .map(|&w| {
            peak = peak.max(w);
            (w - peak) / peak
        })
        .collect()
}

/// Smallest drawdown (a value `<= 0`).
pub fn max_drawdown(wealth: &[f64]) -> Metric {
    if wealth.is_empty() {
        return None;
    }
    Some(drawdowns(wealth).into_iter().fold(0.0, f64::min))
}

/// Root mean square of the drawdown series.
pub fn ulcer(wealth: &[f64]) -> Metric {
    if wealth.is_empty() {
        return None;
    }
    let dd = drawdowns(wealth);
    Some((dd.iter().map(|d| d * d).sum::<f64>() / dd.len() as f64).sqrt())
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Mean of the best `ceil(0.1 L)` returns over minus the mean of the worst `ceil(0.1 L)`.
pub fn rachev10(returns: &[f64]) -> Metric {
    let l = returns.len();
    if l < 10 {
        return None;
    }
    let tail = (TAIL_FRACTION * l as f64).ceil() as usize;
    let v = sorted(returns);
    let best = mean(&v[l - tail..])?;
    let worst = -mean(&v[..tail])?;
    if is_zero(worst, magnitude(returns)) {
        return None;
    }
    Some(best / worst)
}

/// `(1/Q) sum_q sum_j |x_{q,j} - x_{q-1,j}|` over a history `x_0, ..., x_Q`.
pub fn turnover(history: &[DVector<f64>]) -> Metric {
    if history.len() < 2 {
        return None;
    }
    let q = history.len() - 1;
    let total: f64 = history.windows(2).map(|w| (&w[1] - &w[0]).abs().sum()).sum();
    Some(total / q as f64)
}

/// Turnover of a rebalance sequence, taking the pre-first portfolio equal to the first one.
pub fn rebalance_turnover(weights: &[DVector<f64>]) -> Metric {
    let first = weights.first()?;
    let mut history = Vec::with_capacity(weights.len() + 1);
    history.push(first.clone());
    history.extend(weights.iter().cloned());
    turnover(&history)
}

fn covariance(a: &[f64], b: &[f64]) -> Metric {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ma, mb) = (mean(a)?, mean(b)?);
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    Some(s / (a.len() - 1) as f64)
}

/// Intercept of the regression of the returns on the index returns.
pub fn jensen_alpha(returns: &[f64], index: &[f64]) -> Metric {
    let var = covariance(index, index)?;
    if is_zero(var, magnitude(index).powi(2)) {
        return None;
    }
    let beta = covariance(returns, index)? / var;
    Some(mean(returns)? - beta * mean(index)?)
}

/// Mean excess return over the index divided by its standard deviation.
pub fn info_ratio(returns: &[f64], index: &[f64]) -> Metric {
    if returns.len() != index.len() {
        return None;
    }
    let diff: Vec<f64> = returns.iter().zip(index).map(|(r, i)| r - i).collect();
    let s = std_dev(&diff)?;
    let scale = magnitude(&diff).max(magnitude(returns)).max(magnitude(index));
    if is_zero(s, scale) {
        return None;
    }
    Some(mean(&diff)? / s)
}

/// The `(floor(0.05 L) + 1)`-th largest loss `-R`.
pub fn var5(returns: &[f64]) -> Metric {
    let l = returns.len();
    if l == 0 {
        return None;
    }
    let rank = (VAR_LEVEL * l as f64).floor() as usize;
    let mut losses: Vec<f64> = returns.iter().map(|r| -r).collect();
    losses.sort_by(|a, b| b.total_cmp(a));
    Some(losses[rank.min(l - 1)])
}

/// `E[max(0, R)] / E[max(0, -R)]`.
pub fn omega(returns: &[f64]) -> Metric {
    if returns.is_empty() {
        return None;
    }
    let n = returns.len() as f64;
    let gains = returns.iter().map(|r| r.max(0.0)).sum::<f64>() / n;
    let losses = returns.iter().map(|r| (-r).max(0.0)).sum::<f64>() / n;
    if is_zero(losses, magnitude(returns)) {
        return None;
    }
    Some(gains / losses)
}

/// Mean count of weights above `threshold`.
pub fn avg_holdings(weights: &[DVector<f64>], threshold: f64) -> Metric {
    if weights.is_empty() {
        return None;
    }
    let total: usize = weights.iter().map(|x| x.iter().filter(|v| **v > threshold).count()).sum();
    Some(total as f64 / weights.len() as f64)
}

/// `(W_t - W_{t-h}) / W_{t-h}` for every `t >= h`.
pub fn roi(wealth: &[f64], horizon: usize) -> Vec<f64> {
    if horizon == 0 || wealth.len() <= horizon {
        return Vec::new();
    }
    (horizon..wealth.len())
        .map(|t| (wealth[t] - wealth[t - horizon]) / wealth[t - horizon])
        .collect()
}

/// Percentile with linear interpolation between closest ranks, `p` in `[0, 1]`
/// (position `p (n - 1)` in the sorted sample).
pub fn percentile(values: &[f64], p: f64) -> Metric {
    if values.is_empty() || !(0.0..=1.0).contains(&p) {
        return None;
    }
    let v = sorted(values);
    let h = p * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiSummary {
    pub mean: Metric,
    pub std: Metric,
    pub p5: Metric,
    pub p25: Metric,
    pub p50: Metric,
    pub p75: Metric,
    pub p95: Metric,
}

pub fn roi_summary(roi: &[f64]) -> RoiSummary {
    RoiSummary {
        mean: mean(roi),
        std: std_dev(roi),
        p5: percentile(roi, 0.05),
        p25: percentile(roi, 0.25),
        p50: percentile(roi, 0.50),
        p75: percentile(roi, 0.75),
        p95: percentile(roi, 0.95),
    }
}

pub const COLUMNS: [&str; 13] = [
    "Approach", "ExpRet", "Vol", "Sharpe", "MDD", "Ulcer", "Rachev10", "Turn", "AlphaJ", "InfoRatio", "VaR5", "Omega",
    "ave #",
];

pub const ROI_COLUMNS: [&str; 8] = ["Approach", "Mean", "Std", "5%-perc", "25%-perc", "50%-perc", "75%-perc", "95%-perc"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub approach: String,
    pub exp_ret: Metric,
    pub vol: Metric,
    pub sharpe: Metric,
    pub mdd: Metric,
    pub ulcer: Metric,
    pub rachev10: Metric,
    pub turn: Metric,
    pub alpha_j: Metric,
    pub info_ratio: Metric,
    pub var5: Metric,
    pub omega: Metric,
    pub ave_holdings: Metric,
    pub roi: RoiSummary,
}

impl MetricRow {
    pub fn from_run(run: &StrategyRun, benchmark: &[f64], roi_horizon: usize) -> Self {
        let r = &run.returns;
        let oos_wealth = &run.wealth[1..];
        Self {
            approach: run.label.clone(),
            exp_ret: exp_ret(r),
            vol: vol(r),
            sharpe: sharpe(r),
            mdd: max_drawdown(oos_wealth),
            ulcer: ulcer(oos_wealth),
            rachev10: rachev10(r),
            turn: rebalance_turnover(&run.weights),
            alpha_j: jensen_alpha(r, benchmark),
            info_ratio: info_ratio(r, benchmark),
            var5: var5(r),
            omega: omega(r),
            ave_holdings: avg_holdings(&run.weights, DEFAULT_HOLDING_THRESHOLD),
            roi: roi_summary(&roi(&run.wealth, roi_horizon)),
        }
    }

    fn values(&self) -> [Metric; 12] {
        [
            self.exp_ret,
            self.vol,
            self.sharpe,
            self.mdd,
            self.ulcer,
            self.rachev10,
            self.turn,
            self.alpha_j,
            self.info_ratio,
            self.var5,
            self.omega,
            self.ave_holdings,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

fn cell(m: Metric) -> String {
    match m {
        Some(v) => format!("{v}"),
        None => "NA".to_string(),
    }
}

impl MetricTable {
    pub fn from_report(report: &BacktestReport, roi_horizon: usize) -> Self {
        let rows = report
            .strategies
            .par_iter()
            .map(|run| MetricRow::from_run(run, &report.benchmark, roi_horizon))
            .collect();
        Self { rows }
    }

    pub fn row(&self, approach: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.approach == approach)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(COLUMNS)?;
        for row in &self.rows {
            let mut rec = vec![row.approach.clone()];
            rec.extend(row.values().into_iter().map(cell));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<metric table>", e))?;
        Ok(())
    }

    pub fn write_roi_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(ROI_COLUMNS)?;
        for row in &self.rows {
            let s = row.roi;
            let mut rec = vec![row.approach.clone()];
            rec.extend([s.mean, s.std, s.p5, s.p25, s.p50, s.p75, s.p95].into_iter().map(cell));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<roi table>", e))?;
        Ok(())
    }
}
