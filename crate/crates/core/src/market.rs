//! Market data: aligned daily return panel, yearly ESG score table with
//! step-function semantics, index composition weights, and the active-universe
//! rule (complete return history over the fitting window plus an effective
//! ESG score on the decision date).
//!
//! Tabular inputs are plain delimiter-separated text; the parsers here work on
//! in-memory strings so the whole module stays IO-free. File handling lives in
//! the companion crate.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::linalg::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("line {line}: cannot parse date `{text}`")]
    BadDate { line: usize, text: String },
    #[error("line {line}: cannot parse number `{text}`")]
    BadNumber { line: usize, text: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-positive price {price} for {ticker} on {date}")]
    NonPositivePrice {
        date: Date,
        ticker: String,
        price: f64,
    },
    #[error("duplicate ticker `{0}`")]
    DuplicateTicker(String),
    #[error("dates are not strictly increasing at row {row}")]
    DatesNotIncreasing { row: usize },
    #[error("available return at row {row}, column {col} is not finite or not > -1")]
    InvalidReturn { row: usize, col: usize },
    #[error("need at least two price rows to form returns")]
    TooFewRows,
    #[error("negative ESG score {score} for {ticker} in {year}")]
    NegativeScore {
        year: i32,
        ticker: String,
        score: f64,
    },
    #[error(
        "index weights sum to {sum} (off by more than 1e-9 from 1); \
         renormalization was attempted but the input is rejected — fix the weight file"
    )]
    WeightsDoNotSumToOne { sum: f64 },
    #[error("ticker `{0}` is missing from the index weights")]
    MissingIndexWeight(String),
    #[error("active universe is empty on {0}")]
    EmptyUniverse(Date),
    #[error("window [{start}, {end}) is out of the panel's range (rows = {rows})")]
    WindowOutOfRange {
        start: usize,
        end: usize,
        rows: usize,
    },
    #[error("empty input table")]
    EmptyTable,
}

/// Calendar date, ISO-8601 `YYYY-MM-DD`. Ordering is field order, which is
/// chronological. No calendar arithmetic is done in this crate; dates come
/// from input rows and are only compared, grouped by year, and printed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Date {
    pub year: i32,
    pub month: u8,
    pub day: u8,
}

impl Date {
    pub fn new(year: i32, month: u8, day: u8) -> Self {
        debug_assert!((1..=12).contains(&month) && (1..=31).contains(&day));
        Date { year, month, day }
    }

    pub fn parse(text: &str) -> Option<Date> {
        let mut parts = text.split('-');
        let year: i32 = parts.next()?.parse().ok()?;
        let month: u8 = parts.next()?.parse().ok()?;
        let day: u8 = parts.next()?.parse().ok()?;
        if parts.next().is_some() || !(1..=12).contains(&month) || !(1..=31).contains(&day) {
            return None;
        }
        Some(Date { year, month, day })
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

/// Aligned matrix of daily arithmetic returns with an availability mask.
///
/// `returns` holds `NaN` wherever `availability` is false; available entries
/// are finite and strictly greater than -1.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    dates: Vec<Date>,
    tickers: Vec<String>,
    returns: Matrix,
    availability: Vec<bool>,
}

impl ReturnPanel {
    pub fn new(
        dates: Vec<Date>,
        tickers: Vec<String>,
        returns: Matrix,
        availability: Vec<bool>,
    ) -> Result<Self, MarketError> {
        let n = dates.len();
        let m = tickers.len();
        assert_eq!(returns.nrows(), n, "return rows must match dates");
        assert_eq!(returns.ncols(), m, "return columns must match tickers");
        assert_eq!(availability.len(), n * m, "mask must match panel shape");
        for row in 1..n {
            if dates[row] <= dates[row - 1] {
                return Err(MarketError::DatesNotIncreasing { row });
            }
        }
        for (i, t) in tickers.iter().enumerate() {
            if tickers[..i].contains(t) {
                return Err(MarketError::DuplicateTicker(t.clone()));
            }
        }
        for row in 0..n {
            for col in 0..m {
                let v = returns[(row, col)];
                if availability[row * m + col] && !(v.is_finite() && v > -1.0) {
                    return Err(MarketError::InvalidReturn { row, col });
                }
            }
        }
        Ok(ReturnPanel {
            dates,
            tickers,
            returns,
            availability,
        })
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn dates(&self) -> &[Date] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn ret(&self, row: usize, col: usize) -> f64 {
        self.returns[(row, col)]
    }

    pub fn is_available(&self, row: usize, col: usize) -> bool {
        self.availability[row * self.tickers.len() + col]
    }

    /// True when `col` has a full history over rows `[start, end)`.
    pub fn complete_over(&self, col: usize, start: usize, end: usize) -> bool {
        (start..end).all(|row| self.is_available(row, col))
    }

    /// Column slice of returns over `[start, end)`; all entries must be available.
    pub fn window_column(&self, col: usize, start: usize, end: usize) -> Vec<f64> {
        debug_assert!(self.complete_over(col, start, end));
        (start..end).map(|row| self.ret(row, col)).collect()
    }

    /// Sub-matrix of returns over rows `[start, end)` for the given columns.
    pub fn window_matrix(&self, cols: &[usize], start: usize, end: usize) -> Matrix {
        let mut out = Matrix::zeros(end - start, cols.len());
        for (i, row) in (start..end).enumerate() {
            for (j, &col) in cols.iter().enumerate() {
                out[(i, j)] = self.ret(row, col);
            }
        }
        out
    }

    /// Drop all rows strictly after `row` (inclusive truncation).
    pub fn truncate_after(&self, row: usize) -> ReturnPanel {
        let n = row + 1;
        let m = self.tickers.len();
        ReturnPanel {
            dates: self.dates[..n].to_vec(),
            tickers: self.tickers.clone(),
            returns: Matrix::from_vec(n, m, self.returns.data()[..n * m].to_vec()),
            availability: self.availability[..n * m].to_vec(),
        }
    }

    /// Serialize to the interchange format: `date,<ticker>,...` header, one
    /// row per trading day, empty cells where unavailable, full-precision
    /// decimal values (shortest round-trip representation).
    pub fn to_interchange(&self) -> String {
        let mut out = String::new();
        out.push_str("date");
        for t in &self.tickers {
            out.push(',');
            out.push_str(t);
        }
        out.push('\n');
        for (i, d) in self.dates.iter().enumerate() {
            out.push_str(&d.to_string());
            for j in 0..self.tickers.len() {
                out.push(',');
                if self.is_available(i, j) {
                    out.push_str(&format!("{}", self.ret(i, j)));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Parse the format produced by [`ReturnPanel::to_interchange`].
    pub fn from_interchange(text: &str) -> Result<ReturnPanel, MarketError> {
        let table = parse_wide_table(text)?;
        let m = table.tickers.len();
        let n = table.rows.len();
        let mut returns = Matrix::zeros(n, m);
        let mut availability = Vec::with_capacity(n * m);
        for (i, row) in table.rows.iter().enumerate() {
            for (j, cell) in row.values.iter().enumerate() {
                match cell {
                    Some(v) => {
                        returns[(i, j)] = *v;
                        availability.push(true);
                    }
                    None => {
                        returns[(i, j)] = f64::NAN;
                        availability.push(false);
                    }
                }
            }
        }
        ReturnPanel::new(
            table.rows.iter().map(|r| r.date).collect(),
            table.tickers,
            returns,
            availability,
        )
    }
}

struct WideRow {
    date: Date,
    values: Vec<Option<f64>>,
}

struct WideTable {
    tickers: Vec<String>,
    rows: Vec<WideRow>,
}

/// Parse `date,<name>,...` tables with optional empty cells.
fn parse_wide_table(text: &str) -> Result<WideTable, MarketError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(MarketError::EmptyTable)?;
    let mut cols = header.split(',').map(str::trim);
    cols.next(); // key column label
    let tickers: Vec<String> = cols.map(ToString::to_string).collect();
    if tickers.is_empty() {
        return Err(MarketError::EmptyTable);
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != tickers.len() + 1 {
            return Err(MarketError::FieldCount {
                line: line_no,
                expected: tickers.len() + 1,
                found: fields.len(),
            });
        }
        let date = Date::parse(fields[0]).ok_or_else(|| MarketError::BadDate {
            line: line_no,
            text: fields[0].to_string(),
        })?;
        let mut values = Vec::with_capacity(tickers.len());
        for f in &fields[1..] {
            if f.is_empty() || f.eq_ignore_ascii_case("na") {
                values.push(None);
            } else {
                let v: f64 = f.parse().map_err(|_| MarketError::BadNumber {
                    line: line_no,
                    text: f.to_string(),
                })?;
                values.push(Some(v));
            }
        }
        rows.push(WideRow { date, values });
    }
    Ok(WideTable { tickers, rows })
}

/// Build a return panel from a wide price table
/// (`date,<ticker>,...`; one row per trading day; prices positive where present).
///
/// `returns[i][j] = price[i+1][j] / price[i][j] - 1`; the first date is
/// dropped; a return is unavailable when either surrounding price is missing.
pub fn load_prices_from_str(text: &str) -> Result<ReturnPanel, MarketError> {
    let table = parse_wide_table(text)?;
    if table.rows.len() < 2 {
        return Err(MarketError::TooFewRows);
    }
    let m = table.tickers.len();
    for row in &table.rows {
        for (j, v) in row.values.iter().enumerate() {
            if let Some(p) = v {
                if !(p.is_finite() && *p > 0.0) {
                    return Err(MarketError::NonPositivePrice {
                        date: row.date,
                        ticker: table.tickers[j].clone(),
                        price: *p,
                    });
                }
            }
        }
    }
    let n = table.rows.len() - 1;
    let mut returns = Matrix::zeros(n, m);
    let mut availability = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            match (table.rows[i].values[j], table.rows[i + 1].values[j]) {
                (Some(prev), Some(next)) => {
                    returns[(i, j)] = next / prev - 1.0;
                    availability.push(true);
                }
                _ => {
                    returns[(i, j)] = f64::NAN;
                    availability.push(false);
                }
            }
        }
    }
    ReturnPanel::new(
        table.rows[1..].iter().map(|r| r.date).collect(),
        table.tickers,
        returns,
        availability,
    )
}

/// Yearly ESG scores plus index composition weights.
///
/// A score released at the end of year `y` governs every trading day of year
/// `y + 1` up to and including the next release: queries for a date in year
/// `y` therefore read the score keyed `y - 1`. Missing `(year, ticker)` pairs
/// stay missing and drive asset exclusion.
#[derive(Debug, Clone, PartialEq)]
pub struct EsgTable {
    scores: BTreeMap<(i32, String), f64>,
    index_weights: BTreeMap<String, f64>,
}

impl EsgTable {
    pub fn new(
        scores: BTreeMap<(i32, String), f64>,
        index_weights: BTreeMap<String, f64>,
    ) -> Result<Self, MarketError> {
        for ((year, ticker), &score) in &scores {
            if !(score.is_finite() && score >= 0.0) {
                return Err(MarketError::NegativeScore {
                    year: *year,
                    ticker: ticker.clone(),
                    score,
                });
            }
        }
        let sum: f64 = index_weights.values().sum();
        if !((sum - 1.0).abs() <= 1e-9) {
            return Err(MarketError::WeightsDoNotSumToOne { sum });
        }
        // Renormalize exactly so downstream sums hold to 1e-12.
        let index_weights = index_weights
            .into_iter()
            .map(|(k, v)| (k, v / sum))
            .collect();
        Ok(EsgTable {
            scores,
            index_weights,
        })
    }

    /// Raw score keyed by release year.
    pub fn score_for_year(&self, year: i32, ticker: &str) -> Option<f64> {
        self.scores.get(&(year, ticker.to_string())).copied()
    }

    /// Score effective on `date` under the step-function rule.
    pub fn score_at(&self, date: Date, ticker: &str) -> Option<f64> {
        self.score_for_year(date.year - 1, ticker)
    }

    pub fn index_weight(&self, ticker: &str) -> Option<f64> {
        self.index_weights.get(ticker).copied()
    }

    pub fn release_years(&self) -> Vec<i32> {
        let mut years: Vec<i32> = self.scores.keys().map(|(y, _)| *y).collect();
        years.dedup();
        years
    }
}

/// Parse the yearly score table (`year,<ticker>,...`) and the index weight
/// table (`ticker,weight`) into an [`EsgTable`].
pub fn load_esg_from_str(scores_text: &str, weights_text: &str) -> Result<EsgTable, MarketError> {
    let mut scores = BTreeMap::new();
    {
        let mut lines = scores_text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(MarketError::EmptyTable)?;
        let mut cols = header.split(',').map(str::trim);
        cols.next();
        let tickers: Vec<String> = cols.map(ToString::to_string).collect();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != tickers.len() + 1 {
                return Err(MarketError::FieldCount {
                    line: line_no,
                    expected: tickers.len() + 1,
                    found: fields.len(),
                });
            }
            let year: i32 = fields[0].parse().map_err(|_| MarketError::BadNumber {
                line: line_no,
                text: fields[0].to_string(),
            })?;
            for (j, f) in fields[1..].iter().enumerate() {
                if f.is_empty() || f.eq_ignore_ascii_case("na") {
                    continue;
                }
                let v: f64 = f.parse().map_err(|_| MarketError::BadNumber {
                    line: line_no,
                    text: f.to_string(),
                })?;
                scores.insert((year, tickers[j].clone()), v);
            }
        }
    }
    let mut index_weights = BTreeMap::new();
    {
        let mut lines = weights_text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let _ = lines.next().ok_or(MarketError::EmptyTable)?; // ticker,weight header
        for (idx, line) in lines {
            let line_no = idx + 1;
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 2 {
                return Err(MarketError::FieldCount {
                    line: line_no,
                    expected: 2,
                    found: fields.len(),
                });
            }
            let w: f64 = fields[1].parse().map_err(|_| MarketError::BadNumber {
                line: line_no,
                text: fields[1].to_string(),
            })?;
            index_weights.insert(fields[0].to_string(), w);
        }
    }
    EsgTable::new(scores, index_weights)
}

/// Column indices (in panel order) of assets with a complete return history
/// over rows `[window_start, window_end)` and an ESG score effective at `date`.
pub fn active_universe(
    panel: &ReturnPanel,
    esg: &EsgTable,
    window_start: usize,
    window_end: usize,
    date: Date,
) -> Result<Vec<usize>, MarketError> {
    if window_end > panel.n_dates() || window_start >= window_end {
        return Err(MarketError::WindowOutOfRange {
            start: window_start,
            end: window_end,
            rows: panel.n_dates(),
        });
    }
    let universe: Vec<usize> = (0..panel.n_assets())
        .filter(|&col| {
            panel.complete_over(col, window_start, window_end)
                && esg.score_at(date, &panel.tickers()[col]).is_some()
        })
        .collect();
    if universe.is_empty() {
        return Err(MarketError::EmptyUniverse(date));
    }
    Ok(universe)
}

/// Index composition weights renormalized over the given universe
/// (`w_i = C_i / Σ_{j ∈ universe} C_j`).
pub fn benchmark_weights(
    esg: &EsgTable,
    panel: &ReturnPanel,
    universe: &[usize],
) -> Result<Vec<f64>, MarketError> {
    assert!(!universe.is_empty(), "universe must be non-empty");
    let mut raw = Vec::with_capacity(universe.len());
    for &col in universe {
        let ticker = &panel.tickers()[col];
        let c = esg
            .index_weight(ticker)
            .ok_or_else(|| MarketError::MissingIndexWeight(ticker.clone()))?;
        raw.push(c);
    }
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|c| c / total).collect())
}
