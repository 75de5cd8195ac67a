//! File IO around the core parsers and the run's output tree.
//!
//! Output layout under the run directory:
//!   manifest.json      — config echo, input checksums, seed, statuses
//!   report.csv         — benchmark table + per-(mode, ρ, β) metric tables
//!   summary.json       — structured per-strategy metrics
//!   curves/<id>.csv    — date,wealth equity curve per strategy
//!   series/<id>.csv    — date,return,turnover,wealth
//!   weights/<id>.csv   — full-universe weights per day (optional)
//!
//! All numbers are written with the shortest round-trip representation, so a
//! rerun with identical inputs produces byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use esgbl_core::backtest::BacktestResult;
use esgbl_core::market::{load_esg_from_str, load_prices_from_str, EsgTable, ReturnPanel};

use crate::AppError;

pub fn read_panel(path: &Path) -> Result<ReturnPanel, AppError> {
    let text = fs::read_to_string(path).map_err(AppError::io(path.display().to_string()))?;
    load_prices_from_str(&text).map_err(|e| AppError::Data(format!("{}: {e}", path.display())))
}

pub fn read_esg(scores: &Path, weights: &Path) -> Result<EsgTable, AppError> {
    let scores_text =
        fs::read_to_string(scores).map_err(AppError::io(scores.display().to_string()))?;
    let weights_text =
        fs::read_to_string(weights).map_err(AppError::io(weights.display().to_string()))?;
    load_esg_from_str(&scores_text, &weights_text)
        .map_err(|e| AppError::Data(format!("{}: {e}", scores.display())))
}

pub fn sha256_hex(path: &Path) -> Result<String, AppError> {
    let bytes = fs::read(path).map_err(AppError::io(path.display().to_string()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().fold(String::new(), |mut acc, b| {
        let _ = write!(acc, "{b:02x}");
        acc
    }))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), AppError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(AppError::io(parent.display().to_string()))?;
    }
    fs::write(path, text).map_err(AppError::io(path.display().to_string()))
}

pub fn curve_csv(result: &BacktestResult) -> String {
    let mut out = String::from("date,wealth\n");
    for (date, wealth) in result.dates.iter().zip(&result.wealth) {
        let _ = writeln!(out, "{date},{wealth}");
    }
    out
}

pub fn series_csv(result: &BacktestResult) -> String {
    let mut out = String::from("date,return,turnover,wealth\n");
    for i in 0..result.dates.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            result.dates[i], result.daily_returns[i], result.daily_turnover[i], result.wealth[i]
        );
    }
    out
}

pub fn weights_csv(result: &BacktestResult, tickers: &[String]) -> String {
    let mut out = String::from("date");
    for t in tickers {
        let _ = write!(out, ",{t}");
    }
    out.push('\n');
    for (date, row) in result.dates.iter().zip(&result.daily_weights) {
        let _ = write!(out, "{date}");
        for w in row {
            let _ = write!(out, ",{w}");
        }
        out.push('\n');
    }
    out
}

/// Parse a `date,wealth` curve file back into pairs.
pub fn parse_curve(text: &str) -> Result<Vec<(String, f64)>, AppError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (date, wealth) = line
            .split_once(',')
            .ok_or_else(|| AppError::Data(format!("curve line {} malformed", idx + 1)))?;
        let value: f64 = wealth
            .parse()
            .map_err(|_| AppError::Data(format!("curve line {}: bad number `{wealth}`", idx + 1)))?;
        out.push((date.to_string(), value));
    }
    Ok(out)
}
