//! Price histories, arithmetic returns and window moment estimates.
//!
//! Price files are UTF-8 CSV with a header `date,<ticker1>,<ticker2>,...`,
//! ISO-8601 dates in the first column and `.` as decimal point. An empty
//! cell is a missing price: the whole asset is dropped from the loaded data
//! and reported, nothing is imputed.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Aligned price panel with the derived arithmetic returns.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketData {
    asset_ids: Vec<String>,
    dates: Vec<NaiveDate>,
    /// `T x n`, strictly positive.
    prices: DMatrix<f64>,
    /// `(T-1) x n`, `returns[(t, j)] = prices[(t+1, j)] / prices[(t, j)] - 1`.
    returns: DMatrix<f64>,
}

impl MarketData {
    pub fn new(asset_ids: Vec<String>, dates: Vec<NaiveDate>, prices: DMatrix<f64>) -> Result<Self> {
        if prices.nrows() != dates.len() || prices.ncols() != asset_ids.len() {
            return Err(Error::Shape(format!(
                "price matrix is {}x{} but there are {} dates and {} assets",
                prices.nrows(),
                prices.ncols(),
                dates.len(),
                asset_ids.len()
            )));
        }
        if dates.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 dates, got {}",
                dates.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!(
                "dates must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(p) = prices.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::InvalidArgument(format!("prices must be positive, found {p}")));
        }
        let returns = arithmetic_returns(&prices);
        Ok(Self {
            asset_ids,
            dates,
            prices,
            returns,
        })
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    /// Sub-panel over the price rows `rows`.
    pub fn slice(&self, rows: Range<usize>) -> Result<Self> {
        if rows.end > self.n_dates() || rows.start >= rows.end {
            return Err(Error::InvalidArgument(format!(
                "price row range {rows:?} outside 0..{}",
                self.n_dates()
            )));
        }
        let prices = self.prices.rows(rows.start, rows.len()).into_owned();
        Self::new(
            self.asset_ids.clone(),
            self.dates[rows].to_vec(),
            prices,
        )
    }

    /// Writes the panel in the price CSV format. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(self.asset_ids.iter().cloned());
        w.write_record(&header)?;
        for (t, date) in self.dates.iter().enumerate() {
            let mut rec = vec![date.format(DATE_FORMAT).to_string()];
            rec.extend((0..self.n_assets()).map(|j| format!("{}", self.prices[(t, j)])));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<price writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn arithmetic_returns(prices: &DMatrix<f64>) -> DMatrix<f64> {
    let (t, n) = prices.shape();
    DMatrix::from_fn(t.saturating_sub(1), n, |r, j| prices[(r + 1, j)] / prices[(r, j)] - 1.0)
}

/// Result of loading a price file.
#[derive(Debug, Clone)]
pub struct PriceLoad {
    pub data: MarketData,
    /// Assets removed because of at least one missing price in the span.
    pub dropped: Vec<String>,
}

/// Loads a price CSV, optionally restricted to the inclusive date span.
pub fn load_prices(path: impl AsRef<Path>, span: Option<(NaiveDate, NaiveDate)>) -> Result<PriceLoad> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_prices(file, path, span)
}

pub fn read_prices<R: Read>(
    reader: R,
    source: &Path,
    span: Option<(NaiveDate, NaiveDate)>,
) -> Result<PriceLoad> {
    let parse_err = |row: usize, column: usize, message: String| Error::Parse {
        path: source.to_path_buf(),
        row,
        column,
        message,
    };

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("date") {
        return Err(parse_err(1, 1, "header must start with `date` followed by tickers".into()));
    }
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_string).collect();

    let mut dates = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // 1-based, counting the header as row 1
        let row = i + 2;
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(parse_err(
                row,
                rec.len().min(header.len()) + 1,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let date = NaiveDate::parse_from_str(&rec[0], DATE_FORMAT)
            .map_err(|e| parse_err(row, 1, format!("bad date `{}`: {e}", &rec[0])))?;
        if let Some((start, end)) = span {
            if date < start || date > end {
                continue;
            }
        }
        let mut values = Vec::with_capacity(tickers.len());
        for (j, cell) in rec.iter().skip(1).enumerate() {
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                values.push(None);
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(row, j + 2, format!("malformed price `{cell}`")))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(parse_err(row, j + 2, format!("price must be positive, got `{cell}`")));
            }
            values.push(Some(v));
        }
        dates.push(date);
        cells.push(values);
    }

    if dates.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{}: need at least 2 dates, found {}",
            source.display(),
            dates.len()
        )));
    }

    let keep: Vec<usize> = (0..tickers.len())
        .filter(|&j| cells.iter().all(|row| row[j].is_some()))
        .collect();
    let dropped: Vec<String> = (0..tickers.len())
        .filter(|j| !keep.contains(j))
        .map(|j| tickers[j].clone())
        .collect();
    if !dropped.is_empty() {
        log::warn!(
            "{}: dropped {} asset(s) with missing prices: {}",
            source.display(),
            dropped.len(),
            dropped.join(", ")
        );
    }
    if keep.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{}: every asset has missing prices",
            source.display()
        )));
    }

    let prices = DMatrix::from_fn(dates.len(), keep.len(), |t, c| {
        cells[t][keep[c]].expect("kept assets have no gaps")
    });
    let asset_ids = keep.iter().map(|&j| tickers[j].clone()).collect();
    let data = MarketData::new(asset_ids, dates, prices)?;
    Ok(PriceLoad { data, dropped })
}

/// Sample mean and covariance of returns over a window of return rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// Half-open range of return rows the estimate was computed on.
    pub window: (usize, usize),
}

/// Estimates `mu` and `sigma` on the return rows in `window`.
///
/// The covariance uses the `L - 1` denominator.
pub fn estimate_moments(data: &MarketData, window: Range<usize>) -> Result<MomentEstimate> {
    let returns = data.returns();
    if window.end > returns.nrows() || window.start > window.end {
        return Err(Error::InvalidArgument(format!(
            "window {window:?} outside the {} return rows",
            returns.nrows()
        )));
    }
    let block = returns.rows(window.start, window.len()).into_owned();
    let (mu, sigma) = sample_moments(&block)?;
    Ok(MomentEstimate {
        mu,
        sigma,
        window: (window.start, window.end),
    })
}

/// Column means and sample covariance of a `L x n` block.
pub fn sample_moments(block: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (len, n) = block.shape();
    if len < 2 {
        return Err(Error::InsufficientData(format!(
            "moment window needs at least 2 observations, got {len}"
        )));
    }
    let mu = DVector::from_fn(n, |j, _| {
        let col = block.column(j);
        let rough = col.iter().sum::<f64>() / len as f64;
        rough + col.iter().map(|v| v - rough).sum::<f64>() / len as f64
    });
    let centered = DMatrix::from_fn(len, n, |t, j| block[(t, j)] - mu[j]);
    let mut sigma = DMatrix::zeros(n, n);
    let denom = (len - 1) as f64;
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for t in 0..len {
                acc += centered[(t, i)] * centered[(t, j)];
            }
            let c = acc / denom;
            sigma[(i, j)] = c;
            sigma[(j, i)] = c;
        }
    }
    Ok((mu, sigma))
}

impl MomentEstimate {
    /// Smallest eigenvalue of `sigma`; sample covariances are PSD up to rounding.
    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.sigma)
    }
}
