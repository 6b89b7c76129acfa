//! Agency ESG scores: feature scaling, Non-ESG scores and disagreement.
//!
//! Agencies rate on their own scales and some of them (risk scores) put the
//! greenest firms at the bottom. Each agency row is min-max scaled across
//! assets and then oriented so that a *lower* Non-ESG score is always
//! greener.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::DATE_FORMAT;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    GreenerIsHigher,
    GreenerIsLower,
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "greener-is-higher" | "higher" => Ok(Orientation::GreenerIsHigher),
            "greener-is-lower" | "lower" => Ok(Orientation::GreenerIsLower),
            other => Err(Error::InvalidArgument(format!("unknown orientation `{other}`"))),
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::GreenerIsHigher => "greener-is-higher",
            Orientation::GreenerIsLower => "greener-is-lower",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgencyMeta {
    pub id: String,
    pub range_min: f64,
    pub range_max: f64,
    pub orientation: Orientation,
}

/// Raw agency x asset scores on each agency's native scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePanel {
    agencies: Vec<AgencyMeta>,
    asset_ids: Vec<String>,
    raw: DMatrix<f64>,
}

impl ScorePanel {
    pub fn new(agencies: Vec<AgencyMeta>, asset_ids: Vec<String>, raw: DMatrix<f64>) -> Result<Self> {
        if raw.nrows() != agencies.len() || raw.ncols() != asset_ids.len() {
            return Err(Error::Shape(format!(
                "score matrix is {}x{} for {} agencies and {} assets",
                raw.nrows(),
                raw.ncols(),
                agencies.len(),
                asset_ids.len()
            )));
        }
        if asset_ids.is_empty() {
            return Err(Error::InsufficientData("score panel has no assets".into()));
        }
        for (i, a) in agencies.iter().enumerate() {
            if !(a.range_min < a.range_max) {
                return Err(Error::InvalidArgument(format!(
                    "agency `{}` declares an empty range [{}, {}]",
                    a.id, a.range_min, a.range_max
                )));
            }
            for (j, v) in raw.row(i).iter().enumerate() {
                if !v.is_finite() || *v < a.range_min || *v > a.range_max {
                    return Err(Error::InvalidArgument(format!(
                        "score {v} of agency `{}` for asset `{}` outside [{}, {}]",
                        a.id, asset_ids[j], a.range_min, a.range_max
                    )));
                }
            }
        }
        Ok(Self {
            agencies,
            asset_ids,
            raw,
        })
    }

    pub fn agencies(&self) -> &[AgencyMeta] {
        &self.agencies
    }

    pub fn agency_ids(&self) -> Vec<String> {
        self.agencies.iter().map(|a| a.id.clone()).collect()
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn raw(&self) -> &DMatrix<f64> {
        &self.raw
    }

    /// Reorders the asset columns to `order`. Every requested asset must be scored.
    pub fn align_to(&self, order: &[String]) -> Result<Self> {
        let index: BTreeMap<&str, usize> = self
            .asset_ids
            .iter()
            .enumerate()
            .map(|(j, a)| (a.as_str(), j))
            .collect();
        let mut cols = Vec::with_capacity(order.len());
        for a in order {
            match index.get(a.as_str()) {
                Some(&j) => cols.push(j),
                None => {
                    return Err(Error::Config(format!("asset `{a}` has no ESG scores")));
                }
            }
        }
        let raw = DMatrix::from_fn(self.raw.nrows(), cols.len(), |i, c| self.raw[(i, cols[c])]);
        Ok(Self {
            agencies: self.agencies.clone(),
            asset_ids: order.to_vec(),
            raw,
        })
    }

    /// Keeps only the listed agencies, in the listed order.
    pub fn select_agencies(&self, ids: &[String]) -> Result<Self> {
        let mut rows = Vec::with_capacity(ids.len());
        for id in ids {
            let i = self
                .agencies
                .iter()
                .position(|a| &a.id == id)
                .ok_or_else(|| Error::Config(format!("unknown agency `{id}`")))?;
            rows.push(i);
        }
        let raw = DMatrix::from_fn(rows.len(), self.raw.ncols(), |r, j| self.raw[(rows[r], j)]);
        Ok(Self {
            agencies: rows.iter().map(|&i| self.agencies[i].clone()).collect(),
            asset_ids: self.asset_ids.clone(),
            raw,
        })
    }
}

/// Non-ESG scores in `[0, 1]`, lower is greener.
#[derive(Debug, Clone, PartialEq)]
pub struct NonEsgPanel {
    pub agency_ids: Vec<String>,
    pub asset_ids: Vec<String>,
    /// `m x n`
    pub s: DMatrix<f64>,
}

impl NonEsgPanel {
    pub fn n_agencies(&self) -> usize {
        self.s.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.s.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.s.row(i).iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizeOptions {
    /// Map a constant agency row to 0.5 instead of failing.
    pub constant_row_fallback: bool,
}

pub const CONSTANT_ROW_SCORE: f64 = 0.5;

/// Per-agency min-max scaling across assets, oriented to Non-ESG scores.
pub fn normalize(panel: &ScorePanel, options: NormalizeOptions) -> Result<NonEsgPanel> {
    let (m, n) = panel.raw.shape();
    let mut s = DMatrix::zeros(m, n);
    for (i, agency) in panel.agencies.iter().enumerate() {
        let row = panel.raw.row(i);
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi == lo {
            if options.constant_row_fallback {
                s.row_mut(i).fill(CONSTANT_ROW_SCORE);
                continue;
            }
            return Err(Error::DegenerateRow(agency.id.clone()));
        }
        let span = hi - lo;
        for j in 0..n {
            let scaled = (row[j] - lo) / span;
            s[(i, j)] = match agency.orientation {
                Orientation::GreenerIsHigher => 1.0 - scaled,
                Orientation::GreenerIsLower => scaled,
            };
        }
    }
    Ok(NonEsgPanel {
        agency_ids: panel.agency_ids(),
        asset_ids: panel.asset_ids.clone(),
        s,
    })
}

/// `s_i' x`, the Non-ESG score of portfolio `x` according to one agency.
pub fn portfolio_score(s_i: &[f64], x: &[f64]) -> Result<f64> {
    if s_i.len() != x.len() {
        return Err(Error::Shape(format!(
            "score vector has {} entries, weights have {}",
            s_i.len(),
            x.len()
        )));
    }
    Ok(s_i.iter().zip(x).map(|(a, b)| a * b).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    Euclidean,
    Chebychev,
    Cosine,
    Correlation,
}

impl DistanceMetric {
    pub const ALL: [DistanceMetric; 4] = [
        DistanceMetric::Euclidean,
        DistanceMetric::Chebychev,
        DistanceMetric::Cosine,
        DistanceMetric::Correlation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistanceMetric::Euclidean => "euclidean",
            DistanceMetric::Chebychev => "chebychev",
            DistanceMetric::Cosine => "cosine",
            DistanceMetric::Correlation => "correlation",
        }
    }

    /// Factor applied when scores are read on a 0-100 scale.
    pub fn percent_scale_factor(self) -> f64 {
        match self {
            DistanceMetric::Euclidean | DistanceMetric::Chebychev => 100.0,
            DistanceMetric::Cosine | DistanceMetric::Correlation => 1.0,
        }
    }

    /// Distance between two score rows; `None` when undefined (zero-norm or
    /// zero-variance rows for the angular metrics).
    pub fn distance(self, a: &[f64], b: &[f64]) -> Option<f64> {
        debug_assert_eq!(a.len(), b.len());
        match self {
            DistanceMetric::Euclidean => {
                Some(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
            }
            DistanceMetric::Chebychev => {
                Some(a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
            }
            DistanceMetric::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    return None;
                }
                Some(1.0 - dot / (na * nb))
            }
            DistanceMetric::Correlation => {
                let n = a.len() as f64;
                let ma = a.iter().sum::<f64>() / n;
                let mb = b.iter().sum::<f64>() / n;
                let mut sab = 0.0;
                let mut saa = 0.0;
                let mut sbb = 0.0;
                for (x, y) in a.iter().zip(b) {
                    sab += (x - ma) * (y - mb);
                    saa += (x - ma) * (x - ma);
                    sbb += (y - mb) * (y - mb);
                }
                let scale = a.iter().chain(b).map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
                let tiny = (1e-14 * scale).powi(2) * n;
                if saa <= tiny || sbb <= tiny {
                    return None;
                }
                Some(1.0 - sab / (saa.sqrt() * sbb.sqrt()))
            }
        }
    }
}

/// Pairwise agency distances for one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Disagreement {
    pub metric: DistanceMetric,
    pub agency_ids: Vec<String>,
    /// Symmetric with zero diagonal; `None` marks an undefined pair.
    pub matrix: Vec<Vec<Option<f64>>>,
    /// Mean over the `m(m-1)/2` unordered pairs; `None` if any pair is undefined.
    pub average: Option<f64>,
}

impl Disagreement {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, Option<f64>)> + '_ {
        let m = self.agency_ids.len();
        (0..m).flat_map(move |i| ((i + 1)..m).map(move |k| (i, k, self.matrix[i][k])))
    }
}

pub fn disagreement(panel: &NonEsgPanel, metric: DistanceMetric) -> Result<Disagreement> {
    let m = panel.n_agencies();
    if m < 2 {
        return Err(Error::InsufficientData(format!(
            "disagreement needs at least 2 agencies, got {m}"
        )));
    }
    let rows: Vec<Vec<f64>> = (0..m).map(|i| panel.row(i)).collect();
    let mut matrix = vec![vec![Some(0.0); m]; m];
    let mut sum = 0.0;
    let mut all_defined = true;
    for i in 0..m {
        for k in (i + 1)..m {
            let d = metric.distance(&rows[i], &rows[k]);
            matrix[i][k] = d;
            matrix[k][i] = d;
            match d {
                Some(v) => sum += v,
                None => {
                    all_defined = false;
                    log::warn!(
                        "{} distance undefined for agencies `{}` / `{}`",
                        metric.name(),
                        panel.agency_ids[i],
                        panel.agency_ids[k]
                    );
                }
            }
        }
    }
    let pairs = (m * (m - 1) / 2) as f64;
    Ok(Disagreement {
        metric,
        agency_ids: panel.agency_ids.clone(),
        matrix,
        average: all_defined.then_some(sum / pairs),
    })
}

/// Score panels indexed by the date from which each is in force.
///
/// Undated score files produce a single panel valid from `NaiveDate::MIN`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreHistory {
    panels: Vec<(NaiveDate, ScorePanel)>,
}

impl ScoreHistory {
    pub fn new(mut panels: Vec<(NaiveDate, ScorePanel)>) -> Result<Self> {
        if panels.is_empty() {
            return Err(Error::InsufficientData("score history is empty".into()));
        }
        panels.sort_by_key(|(d, _)| *d);
        if panels.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument("duplicate score panel date".into()));
        }
        Ok(Self { panels })
    }

    pub fn single(panel: ScorePanel) -> Self {
        Self {
            panels: vec![(NaiveDate::MIN, panel)],
        }
    }

    pub fn panels(&self) -> &[(NaiveDate, ScorePanel)] {
        &self.panels
    }

    /// Most recent panel dated on or before `date`.
    pub fn as_of(&self, date: NaiveDate) -> Option<&ScorePanel> {
        let idx = self.panels.partition_point(|(d, _)| *d <= date);
        idx.checked_sub(1).map(|i| &self.panels[i].1)
    }
}

/// Reads the per-agency metadata sidecar `agency,range_min,range_max,orientation`.
pub fn read_agency_meta<R: Read>(reader: R, source: &Path) -> Result<Vec<AgencyMeta>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        if rec.len() != 4 {
            return Err(parse_error(source, row, rec.len() + 1, "expected 4 fields".into()));
        }
        let range_min = parse_f64(&rec[1], source, row, 2)?;
        let range_max = parse_f64(&rec[2], source, row, 3)?;
        let orientation = rec[3]
            .parse()
            .map_err(|e: Error| parse_error(source, row, 4, e.to_string()))?;
        out.push(AgencyMeta {
            id: rec[0].to_string(),
            range_min,
            range_max,
            orientation,
        });
    }
    Ok(out)
}

/// Reads the long-format score file `[date,]agency,asset,score`.
pub fn read_scores<R: Read>(reader: R, source: &Path, meta: &[AgencyMeta]) -> Result<ScoreHistory> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let dated = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["agency", "asset", "score"] => false,
        ["date", "agency", "asset", "score"] => true,
        _ => {
            return Err(parse_error(
                source,
                1,
                1,
                "header must be `agency,asset,score` or `date,agency,asset,score`".into(),
            ))
        }
    };
    let offset = usize::from(dated);

    // date -> agency -> asset -> score
    let mut cells: BTreeMap<NaiveDate, BTreeMap<String, BTreeMap<String, f64>>> = BTreeMap::new();
    let mut asset_order: Vec<String> = Vec::new();
    let mut seen_assets = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(parse_error(source, row, rec.len() + 1, "wrong field count".into()));
        }
        let date = if dated {
            NaiveDate::parse_from_str(&rec[0], DATE_FORMAT)
                .map_err(|e| parse_error(source, row, 1, format!("bad date `{}`: {e}", &rec[0])))?
        } else {
            NaiveDate::MIN
        };
        let agency = rec[offset].to_string();
        let asset = rec[offset + 1].to_string();
        let score = parse_f64(&rec[offset + 2], source, row, offset + 3)?;
        if seen_assets.insert(asset.clone()) {
            asset_order.push(asset.clone());
        }
        let prev = cells
            .entry(date)
            .or_default()
            .entry(agency.clone())
            .or_default()
            .insert(asset.clone(), score);
        if prev.is_some() {
            return Err(parse_error(
                source,
                row,
                1,
                format!("duplicate score for agency `{agency}`, asset `{asset}`"),
            ));
        }
    }

    let mut panels = Vec::new();
    for (date, by_agency) in cells {
        let agencies: Vec<AgencyMeta> = meta
            .iter()
            .filter(|a| by_agency.contains_key(&a.id))
            .cloned()
            .collect();
        if let Some(unknown) = by_agency.keys().find(|k| !meta.iter().any(|a| &a.id == *k)) {
            return Err(Error::Config(format!("agency `{unknown}` missing from metadata")));
        }
        let mut raw = DMatrix::zeros(agencies.len(), asset_order.len());
        for (i, a) in agencies.iter().enumerate() {
            let row = &by_agency[&a.id];
            for (j, asset) in asset_order.iter().enumerate() {
                raw[(i, j)] = *row.get(asset).ok_or_else(|| {
                    Error::Config(format!(
                        "agency `{}` has no score for asset `{asset}` in panel {date}",
                        a.id
                    ))
                })?;
            }
        }
        panels.push((date, ScorePanel::new(agencies, asset_order.clone(), raw)?));
    }
    ScoreHistory::new(panels)
}

/// Writes the sidecar read by [`read_agency_meta`].
pub fn write_agency_meta<W: Write>(meta: &[AgencyMeta], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["agency", "range_min", "range_max", "orientation"])?;
    for a in meta {
        w.write_record([a.id.clone(), format!("{}", a.range_min), format!("{}", a.range_max), a.orientation.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<agency metadata>", e))?;
    Ok(())
}

/// Writes the long format read by [`read_scores`]; the `date` column is
/// omitted for a single undated panel.
pub fn write_scores<W: Write>(history: &ScoreHistory, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let undated = history.panels.len() == 1 && history.panels[0].0 == NaiveDate::MIN;
    if undated {
        w.write_record(["agency", "asset", "score"])?;
    } else {
        w.write_record(["date", "agency", "asset", "score"])?;
    }
    for (date, panel) in &history.panels {
        for (i, a) in panel.agencies.iter().enumerate() {
            for (j, asset) in panel.asset_ids.iter().enumerate() {
                let score = format!("{}", panel.raw[(i, j)]);
                if undated {
                    w.write_record([a.id.as_str(), asset, &score])?;
                } else {
                    w.write_record([&date.format(DATE_FORMAT).to_string(), a.id.as_str(), asset, &score])?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io("<score writer>", e))?;
    Ok(())
}

pub fn load_scores(scores: impl AsRef<Path>, meta: impl AsRef<Path>) -> Result<ScoreHistory> {
    let (scores, meta) = (scores.as_ref(), meta.as_ref());
    let meta_file = std::fs::File::open(meta).map_err(|e| Error::io(meta, e))?;
    let meta_rows = read_agency_meta(meta_file, meta)?;
    let file = std::fs::File::open(scores).map_err(|e| Error::io(scores, e))?;
    read_scores(file, scores, &meta_rows)
}

fn parse_f64(cell: &str, source: &Path, row: usize, column: usize) -> Result<f64> {
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_error(source, row, column, format!("malformed number `{cell}`")))
}

fn parse_error(source: &Path, row: usize, column: usize, message: String) -> Error {
    Error::Parse {
        path: source.to_path_buf(),
        row,
        column,
        message,
    }
}
