use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use ksum_core::backtest::{self, BacktestReport};
use ksum_core::baselines::StrategySpec;
use ksum_core::data::{self, estimate_moments, MarketData, DATE_FORMAT};
use ksum_core::frontier::{self, FrontierSurface};
use ksum_core::ksum::KsumInstance;
use ksum_core::metrics::MetricTable;
use ksum_core::scores::{self, disagreement, DistanceMetric, NonEsgPanel, ScoreHistory};
use ksum_core::synth;
use log::{info, warn};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, ExitStatus};
use crate::manifest::{sha256_hex, Manifest};

/// Share of failed grid points above which `frontier` reports a partial failure.
pub const MAX_FAILED_FRACTION: f64 = 0.1;

/// Result of a command that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub output_dir: PathBuf,
    /// Some solves failed but outputs were still written.
    pub partial_failure: bool,
}

impl Outcome {
    pub fn exit_status(&self) -> ExitStatus {
        if self.partial_failure {
            ExitStatus::PartialFailure
        } else {
            ExitStatus::Success
        }
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn create_file(path: &Path) -> CliResult<std::io::BufWriter<fs::File>> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(std::io::BufWriter::new(file))
}

fn write_lines(path: &Path, lines: &[String]) -> CliResult<()> {
    let mut w = create_file(path)?;
    for line in lines {
        writeln!(w, "{line}").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v}"))
}

fn load_score_history(config: &RunConfig) -> CliResult<(ScoreHistory, Vec<PathBuf>)> {
    let scores_path = config.require(&config.scores, "scores")?;
    let meta_path = config.require(&config.agency_meta, "agency metadata")?;
    let history = scores::load_scores(scores_path, meta_path)?;
    Ok((history, vec![scores_path.to_path_buf(), meta_path.to_path_buf()]))
}

fn load_market(config: &RunConfig) -> CliResult<(MarketData, PathBuf)> {
    let path = config.require(&config.prices, "prices")?;
    let load = data::load_prices(path, config.span()?)?;
    if !load.dropped.is_empty() {
        warn!("dropped {} asset(s) with missing prices: {}", load.dropped.len(), load.dropped.join(", "));
    }
    Ok((load.data, path.to_path_buf()))
}

/// Writes per-agency-pair distances and the four-metric average table for
/// every score panel.
pub fn cmd_disagreement(config: &RunConfig) -> CliResult<Outcome> {
    let (history, inputs) = load_score_history(config)?;
    let out = config.output_dir.clone();
    create_dir(&out)?;

    let mut pairs = vec!["date,agency_a,agency_b,metric,distance,distance_percent".to_string()];
    let mut gaps = vec!["date,asset,agency_a,agency_b,abs_difference".to_string()];
    let mut header = vec!["date".to_string()];
    header.extend(DistanceMetric::ALL.iter().map(|m| m.name().to_string()));
    let mut averages = vec![header.join(",")];

    for (date, panel) in history.panels() {
        let panel = match &config.agencies {
            Some(ids) => panel.select_agencies(ids)?,
            None => panel.clone(),
        };
        let s = scores::normalize(&panel, config.normalize)?;
        let day = date.format(DATE_FORMAT).to_string();
        let mut row = vec![day.clone()];
        for metric in DistanceMetric::ALL {
            let d = disagreement(&s, metric)?;
            for (a, b, v) in d.pairs() {
                pairs.push(format!(
                    "{day},{},{},{},{},{}",
                    d.agency_ids[a],
                    d.agency_ids[b],
                    metric.name(),
                    cell(v),
                    cell(v.map(|v| v * metric.percent_scale_factor()))
                ));
            }
            row.push(cell(d.average));
        }
        averages.push(row.join(","));
        push_asset_gaps(&mut gaps, &day, &s);
    }

    write_lines(&out.join("pairs.csv"), &pairs)?;
    write_lines(&out.join("asset_gaps.csv"), &gaps)?;
    write_lines(&out.join("averages.csv"), &averages)?;

    let mut manifest = Manifest::new(
        "disagreement",
        &config.canonical_json(),
        json!({ "panels": history.panels().len() }),
    );
    manifest.add_inputs(&inputs)?;
    manifest.add_outputs(&out)?;
    manifest.write(&out)?;
    Ok(Outcome {
        output_dir: out,
        partial_failure: false,
    })
}

/// Per-asset absolute score gaps for every agency pair.
fn push_asset_gaps(lines: &mut Vec<String>, day: &str, s: &NonEsgPanel) {
    let m = s.agency_ids.len();
    for (j, asset) in s.asset_ids.iter().enumerate() {
        for a in 0..m {
            for b in (a + 1)..m {
                let gap = (s.s[(a, j)] - s.s[(b, j)]).abs();
                lines.push(format!("{day},{asset},{},{},{gap}", s.agency_ids[a], s.agency_ids[b]));
            }
        }
    }
}

/// Instance estimated from the last `window` return rows, scored with the
/// panel in force on the last price date.
pub fn frontier_instance(config: &RunConfig, market: &MarketData, history: &ScoreHistory) -> CliResult<KsumInstance> {
    let t_ret = market.returns().nrows();
    let window = config.frontier.window;
    if window < 2 || window > t_ret {
        return Err(CliError::Config(format!(
            "frontier window {window} needs between 2 and {t_ret} return rows"
        )));
    }
    let moments = estimate_moments(market, t_ret - window..t_ret)?;
    let last = *market.dates().last().expect("market has dates");
    let s = backtest::align_scores(history, last, market.asset_ids(), config.agencies.as_deref(), config.normalize)?;
    let m = s.agency_ids.len();
    if config.k == 0 || config.k > m {
        return Err(CliError::Config(format!("k = {} must lie in 1..={m}", config.k)));
    }
    Ok(KsumInstance::new(moments.sigma, moments.mu, s.s, config.k)?)
}

/// Digest of the numbers that define an instance.
pub fn instance_hash(inst: &KsumInstance) -> String {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&(inst.k() as u64).to_le_bytes());
    for v in inst.sigma().iter().chain(inst.mu().iter()).chain(inst.s().iter()) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    sha256_hex(&bytes)
}

fn write_profiles(path: &Path, inst: &KsumInstance, config: &RunConfig) -> CliResult<usize> {
    let mut lines = vec!["alpha,mu_bar,gamma_bar,gamma_min,gamma_max".to_string()];
    let profiles = match frontier::select_profiles(inst, &config.solver) {
        Ok(p) => p,
        Err(e) => {
            warn!("profile selection failed: {e}");
            write_lines(path, &lines)?;
            return Ok(0);
        }
    };
    for p in &profiles {
        lines.push(format!("{},{},{},{},{}", p.alpha, p.mu_bar, p.gamma_bar, p.gamma_min, p.gamma_max));
    }
    write_lines(path, &lines)?;
    Ok(profiles.len())
}

/// Traces the efficient surface and the four target profiles.
pub fn cmd_frontier(config: &RunConfig) -> CliResult<Outcome> {
    let (market, prices_path) = load_market(config)?;
    let (history, mut inputs) = load_score_history(config)?;
    inputs.insert(0, prices_path);
    let inst = frontier_instance(config, &market, &history)?;
    let (n_mu, n_gamma) = (config.frontier.n_mu, config.frontier.n_gamma);
    if n_mu == 0 || n_gamma == 0 {
        return Err(CliError::Config("frontier grid sizes must be positive".into()));
    }
    let surface = frontier::trace_surface(&inst, n_mu, n_gamma, &config.solver)?;

    let out = config.output_dir.clone();
    create_dir(&out)?;
    let path = out.join("surface.csv");
    let mut w = create_file(&path)?;
    surface.write_csv(&mut w)?;
    w.flush().map_err(|e| CliError::io(&path, e))?;
    let n_profiles = write_profiles(&out.join("profiles.csv"), &inst, config)?;

    let failed = surface.failure_fraction();
    let partial = failed > MAX_FAILED_FRACTION || n_profiles == 0;
    info!("surface: {} points, {} failed", surface.n_points(), surface.n_failed());
    let mut manifest = Manifest::new("frontier", &config.canonical_json(), frontier_details(&surface, &inst, config));
    manifest.add_inputs(&inputs)?;
    manifest.add_outputs(&out)?;
    manifest.write(&out)?;
    Ok(Outcome {
        output_dir: out,
        partial_failure: partial,
    })
}

fn frontier_details(surface: &FrontierSurface, inst: &KsumInstance, config: &RunConfig) -> serde_json::Value {
    json!({
        "instance_sha256": instance_hash(inst),
        "n_assets": inst.mu().len(),
        "n_agencies": inst.s().nrows(),
        "k": inst.k(),
        "window": config.frontier.window,
        "n_mu": config.frontier.n_mu,
        "n_gamma": config.frontier.n_gamma,
        "mu_min": surface.mu_range.mu_min,
        "mu_max": surface.mu_range.mu_max,
        "n_points": surface.n_points(),
        "n_failed": surface.n_failed(),
        "gminv_gap": surface.gminv_gap(),
    })
}

/// Benchmark returns from a `date,return` file, one per return row of `market`.
/// Row `t` earns its return on `dates[t + 1]`.
pub fn load_benchmark(path: &Path, market: &MarketData) -> CliResult<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(ksum_core::Error::from)?;
    let mut by_date = BTreeMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(ksum_core::Error::from)?;
        let bad = |what: &str| CliError::Config(format!("{}: row {}: bad {what}", path.display(), row + 2));
        if rec.len() < 2 {
            return Err(bad("record"));
        }
        let date = NaiveDate::parse_from_str(&rec[0], DATE_FORMAT).map_err(|_| bad("date"))?;
        let value: f64 = rec[1].parse().map_err(|_| bad("return"))?;
        if !value.is_finite() {
            return Err(bad("return"));
        }
        by_date.insert(date, value);
    }
    market.dates()[1..]
        .iter()
        .map(|d| {
            by_date.get(d).copied().ok_or_else(|| {
                CliError::Config(format!("{} has no return for {}", path.display(), d.format(DATE_FORMAT)))
            })
        })
        .collect()
}

/// Metric tables to write: one per k of the roster, each holding the
/// baselines and that k's k-worst rows. A roster without k-worst strategies
/// yields a single table.
pub fn metric_tables(report: &BacktestReport, roi_horizon: usize) -> Vec<(String, MetricTable)> {
    let full = MetricTable::from_report(report, roi_horizon);
    let k_of = |label: &str| {
        report
            .strategies
            .iter()
            .find(|s| s.label == label)
            .and_then(|s| match s.spec {
                StrategySpec::KWorst { k, .. } => Some(k),
                _ => None,
            })
    };
    let mut ks: Vec<usize> = full.rows.iter().filter_map(|r| k_of(&r.approach)).collect();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return vec![("metrics".to_string(), full)];
    }
    ks.into_iter()
        .map(|k| {
            let rows = full
                .rows
                .iter()
                .filter(|r| k_of(&r.approach).is_none_or(|kk| kk == k))
                .cloned()
                .collect();
            (format!("metrics_k{k}"), MetricTable { rows })
        })
        .collect()
}

/// Runs the rolling backtest and writes the report directory plus the
/// metric tables.
pub fn cmd_backtest(config: &RunConfig) -> CliResult<Outcome> {
    let (market, prices_path) = load_market(config)?;
    let (history, mut inputs) = load_score_history(config)?;
    inputs.insert(0, prices_path);
    let benchmark = match &config.index {
        Some(_) => {
            let path = config.require(&config.index, "index")?;
            inputs.push(path.to_path_buf());
            Some(load_benchmark(path, &market)?)
        }
        None => None,
    };
    let bt = config.backtest_config();
    let report = backtest::run_with_benchmark(&market, &history, &bt, benchmark.as_deref())?;

    let out = config.output_dir.clone();
    report.write_dir(&out)?;
    for (name, table) in metric_tables(&report, config.backtest.roi_horizon) {
        let path = out.join(format!("{name}.csv"));
        let mut w = create_file(&path)?;
        table.write_csv(&mut w)?;
        w.flush().map_err(|e| CliError::io(&path, e))?;
        let path = out.join(format!("roi_{}.csv", name.trim_start_matches("metrics_")));
        let mut w = create_file(&path)?;
        table.write_roi_csv(&mut w)?;
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }

    let failures = report.n_failures();
    if failures > 0 {
        warn!("{failures} strategy window(s) fell back to carried or equal weights");
    }
    let details = json!({
        "strategies": report.strategies.iter().map(|s| s.label.clone()).collect::<Vec<_>>(),
        "rebalances": report.rebalance_dates.len(),
        "out_of_sample_days": report.dates.len(),
        "failed_windows": failures,
        "benchmark": if benchmark.is_some() { "index" } else { "cross-sectional-mean" },
    });
    let mut manifest = Manifest::new("backtest", &config.canonical_json(), details);
    manifest.add_inputs(&inputs)?;
    manifest.add_outputs(&out)?;
    manifest.write(&out)?;
    Ok(Outcome {
        output_dir: out,
        partial_failure: failures > 0,
    })
}

/// Generates a seeded synthetic market in the ingest formats.
pub fn cmd_synth(config: &RunConfig) -> CliResult<Outcome> {
    let market = synth::generate(&config.synth)?;
    let out = config.output_dir.clone();
    market.write_dir(&out)?;
    let details = json!({
        "n_assets": config.synth.n_assets,
        "n_dates": config.synth.n_dates,
        "n_agencies": config.synth.n_agencies,
        "seed": config.synth.seed,
    });
    let mut manifest = Manifest::new("synth", &config.canonical_json(), details);
    manifest.add_outputs(&out)?;
    manifest.write(&out)?;
    Ok(Outcome {
        output_dir: out,
        partial_failure: false,
    })
}
