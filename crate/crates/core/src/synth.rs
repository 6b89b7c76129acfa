//! Seeded synthetic markets and agency score panels.
//!
//! Returns follow a linear factor model `r_t = mu + B f_t + e_t` with
//! Gaussian factors and idiosyncratic noise, so the true covariance is
//! `B B' + diag(idio^2)`. Prices compound the returns from 100.
//!
//! Agencies observe a common latent greenness per asset plus a persistent
//! agency-asset bias scaled by `disagreement`; with `disagreement = 0` every
//! agency sees the same thing. The last agency reports on a
//! greener-is-lower scale.

use std::fs;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{MarketData, DATE_FORMAT};
use crate::error::{Error, Result};
use crate::scores::{self, AgencyMeta, Orientation, ScoreHistory, ScorePanel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_assets: usize,
    /// Number of price observations.
    pub n_dates: usize,
    pub n_agencies: usize,
    pub n_factors: usize,
    /// Standard deviation of the agency-asset bias on the unit greenness scale.
    pub disagreement: f64,
    /// A new score panel every this many price dates.
    pub panel_interval: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_assets: 50,
            n_dates: 1500,
            n_agencies: 4,
            n_factors: 3,
            disagreement: 0.3,
            panel_interval: 252,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthMarket {
    pub data: MarketData,
    /// Factor-driven market index return for each return row.
    pub index_returns: Vec<f64>,
    pub agencies: Vec<AgencyMeta>,
    pub scores: ScoreHistory,
    pub true_mu: DVector<f64>,
    pub true_sigma: DMatrix<f64>,
}

fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn generate(config: &SynthConfig) -> Result<SynthMarket> {
    let SynthConfig {
        n_assets: n,
        n_dates: t,
        n_agencies: m,
        n_factors: f,
        disagreement,
        panel_interval,
        seed,
    } = *config;
    if n == 0 || m == 0 || t < 2 || panel_interval == 0 {
        return Err(Error::Config(
            "synthetic market needs assets, agencies, two dates and a positive panel interval".into(),
        ));
    }
    if !(disagreement >= 0.0 && disagreement.is_finite()) {
        return Err(Error::Config("disagreement must be a nonnegative number".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let true_mu = DVector::from_fn(n, |_, _| rng.random_range(0.0..0.0008));
    let mut loadings = DMatrix::zeros(n, f);
    for j in 0..n {
        for c in 0..f {
            let base = if c == 0 { 0.008 } else { 0.0 };
            loadings[(j, c)] = base + 0.004 * normal(&mut rng);
        }
    }
    let idio = DVector::from_fn(n, |_, _| rng.random_range(0.005..0.015));
    let true_sigma = &loadings * loadings.transpose() + DMatrix::from_diagonal(&idio.component_mul(&idio));
    let market_loading = loadings.column(0).mean();

    let mut prices = DMatrix::zeros(t, n);
    prices.row_mut(0).fill(100.0);
    let mut index_returns = Vec::with_capacity(t - 1);
    for row in 1..t {
        let factors = DVector::from_fn(f, |_, _| normal(&mut rng));
        for j in 0..n {
            let r = true_mu[j] + loadings.row(j).transpose().dot(&factors) + idio[j] * normal(&mut rng);
            prices[(row, j)] = prices[(row - 1, j)] * (1.0 + r.max(-0.95));
        }
        index_returns.push(true_mu.mean() + market_loading * factors[0]);
    }
    let start = NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date");
    let dates = business_days(start, t);
    let asset_ids: Vec<String> = (0..n).map(|j| format!("A{:03}", j + 1)).collect();
    let data = MarketData::new(asset_ids.clone(), dates.clone(), prices)?;

    let agencies: Vec<AgencyMeta> = (0..m)
        .map(|i| AgencyMeta {
            id: format!("AG{}", i + 1),
            range_min: 0.0,
            range_max: 100.0,
            orientation: if m > 1 && i == m - 1 {
                Orientation::GreenerIsLower
            } else {
                Orientation::GreenerIsHigher
            },
        })
        .collect();
    let mut green: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..0.9)).collect();
    let bias = DMatrix::from_fn(m, n, |_, _| normal(&mut rng));
    let mut panels = Vec::new();
    for row in (0..t).step_by(panel_interval) {
        if row > 0 {
            for g in green.iter_mut() {
                *g = (*g + 0.02 * normal(&mut rng)).clamp(0.0, 1.0);
            }
        }
        let raw = DMatrix::from_fn(m, n, |i, j| {
            let z = (green[j] + disagreement * bias[(i, j)]).clamp(0.0, 1.0);
            let scaled = match agencies[i].orientation {
                Orientation::GreenerIsHigher => z,
                Orientation::GreenerIsLower => 1.0 - z,
            };
            (100.0 * scaled * 1e4).round() / 1e4
        });
        panels.push((dates[row], ScorePanel::new(agencies.clone(), asset_ids.clone(), raw)?));
    }
    let scores = ScoreHistory::new(panels)?;
    Ok(SynthMarket {
        data,
        index_returns,
        agencies,
        scores,
        true_mu,
        true_sigma,
    })
}

impl SynthMarket {
    /// Writes `prices.csv`, `index.csv`, `scores.csv` and `agencies.csv`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.data.save_csv(dir.join("prices.csv"))?;

        let path = dir.join("index.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["date", "return"])?;
        for (r, v) in self.index_returns.iter().enumerate() {
            w.write_record([self.data.dates()[r + 1].format(DATE_FORMAT).to_string(), format!("{v}")])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("scores.csv");
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        scores::write_scores(&self.scores, std::io::BufWriter::new(file))?;
        let path = dir.join("agencies.csv");
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        scores::write_agency_meta(&self.agencies, std::io::BufWriter::new(file))?;
        Ok(())
    }
}
