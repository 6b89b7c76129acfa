use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use ksum_core::backtest::{BacktestConfig, ScoreAlignment};
use ksum_core::baselines::StrategySpec;
use ksum_core::data::DATE_FORMAT;
use ksum_core::frontier::DEFAULT_GRID;
use ksum_core::metrics::DEFAULT_ROI_HORIZON;
use ksum_core::qp::SolverSettings;
use ksum_core::scores::NormalizeOptions;
use ksum_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Everything a command needs. Relative paths resolve against the config
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Price CSV, `date,<asset>,...`.
    pub prices: Option<PathBuf>,
    /// Score CSV, `[date,]agency,asset,score`.
    pub scores: Option<PathBuf>,
    /// Agency sidecar, `agency,range_min,range_max,orientation`.
    pub agency_meta: Option<PathBuf>,
    /// Optional benchmark returns, `date,return`.
    pub index: Option<PathBuf>,
    /// Inclusive `YYYY-MM-DD` date span applied when loading prices.
    pub span: Option<[String; 2]>,
    /// Agency subset, in order; all agencies when absent.
    pub agencies: Option<Vec<String>>,
    /// `k` of the frontier instance.
    pub k: usize,
    pub normalize: NormalizeOptions,
    pub solver: SolverSettings,
    pub frontier: FrontierSection,
    pub backtest: BacktestSection,
    pub synth: SynthConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            prices: None,
            scores: None,
            agency_meta: None,
            index: None,
            span: None,
            agencies: None,
            k: 1,
            normalize: NormalizeOptions::default(),
            solver: SolverSettings::default(),
            frontier: FrontierSection::default(),
            backtest: BacktestSection::default(),
            synth: SynthConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontierSection {
    pub n_mu: usize,
    pub n_gamma: usize,
    /// Trailing return rows used for the moment estimates.
    pub window: usize,
}

impl Default for FrontierSection {
    fn default() -> Self {
        Self {
            n_mu: DEFAULT_GRID,
            n_gamma: DEFAULT_GRID,
            window: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSection {
    pub in_sample_length: usize,
    pub rebalance_period: usize,
    /// k values of the default roster; one metric table is written per k.
    pub ks: Vec<usize>,
    /// Explicit roster; replaces the default one when present.
    pub strategies: Option<Vec<StrategySpec>>,
    pub score_alignment: ScoreAlignment,
    /// Holding horizon, in days, of the rolling ROI columns.
    pub roi_horizon: usize,
}

impl Default for BacktestSection {
    fn default() -> Self {
        Self {
            in_sample_length: 500,
            rebalance_period: 21,
            ks: vec![1, 2, 3, 4],
            strategies: None,
            score_alignment: ScoreAlignment::default(),
            roi_horizon: DEFAULT_ROI_HORIZON,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
}

impl RunConfig {
    /// Reads a JSON config and makes its relative paths absolute.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.prices, &mut self.scores, &mut self.agency_meta, &mut self.index]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(out) = &overrides.out {
            self.output_dir = out.clone();
        }
        if let Some(k) = overrides.k {
            self.k = k;
            self.backtest.ks = vec![k];
        }
        if let Some(seed) = overrides.seed {
            self.synth.seed = seed;
        }
    }

    pub fn span(&self) -> CliResult<Option<(NaiveDate, NaiveDate)>> {
        let Some([a, b]) = &self.span else {
            return Ok(None);
        };
        let parse = |s: &str| {
            NaiveDate::parse_from_str(s, DATE_FORMAT).map_err(|e| CliError::Config(format!("span date `{s}`: {e}")))
        };
        let (a, b) = (parse(a)?, parse(b)?);
        if a > b {
            return Err(CliError::Config("span start is after its end".into()));
        }
        Ok(Some((a, b)))
    }

    /// The roster actually run by `backtest`.
    pub fn strategies(&self) -> Vec<StrategySpec> {
        match &self.backtest.strategies {
            Some(s) => s.clone(),
            None => StrategySpec::roster(&self.backtest.ks),
        }
    }

    pub fn backtest_config(&self) -> BacktestConfig {
        BacktestConfig {
            in_sample_length: self.backtest.in_sample_length,
            rebalance_period: self.backtest.rebalance_period,
            strategies: self.strategies(),
            score_alignment: self.backtest.score_alignment,
            agencies: self.agencies.clone(),
            normalize: self.normalize,
            solver: self.solver,
        }
    }

    pub fn require<'a>(&self, path: &'a Option<PathBuf>, what: &str) -> CliResult<&'a Path> {
        let p = path
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("config does not name a {what} file")))?;
        if !p.exists() {
            return Err(CliError::Config(format!("{what} file {} does not exist", p.display())));
        }
        Ok(p)
    }

    /// Canonical JSON of the settings that determine a command's outputs.
    /// File locations are left out: inputs are hashed by content instead, so
    /// relocating a run keeps its hash.
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            for key in ["prices", "scores", "agency_meta", "index", "output_dir"] {
                obj.remove(key);
            }
        }
        serde_json::to_string(&value).expect("value serializes")
    }
}
