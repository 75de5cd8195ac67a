//! Reward-risk ratios and summary statistics per strategy.
//!
//! Daily ratios (Sharpe, Sortino, Gini, STARR) are per-day averages with a
//! zero risk-free rate; the drawdown ratio uses the total return and the
//! maximum peak-to-trough decline of the wealth curve over the whole period;
//! turnover is annualized with 252 trading days. Degenerate denominators
//! produce a distinguished undefined value (`None`), never an infinity.
//!
//! Conventions pinned here because the ratios are only defined up to them:
//! Sharpe uses the sample standard deviation (n−1); Sortino uses the
//! downside deviation below target 0 with the full-sample denominator; the
//! Gini denominator is the Gini mean difference of daily returns; STARR
//! divides by the empirical CVaR at the strategy's own confidence level and
//! is undefined when that CVaR is not positive.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::math;
use crate::risk;

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("need at least 2 daily returns, found {0}")]
    TooFew(usize),
    #[error("wealth became non-positive (return ≤ -100%)")]
    NonPositiveWealth,
    #[error(transparent)]
    Risk(#[from] risk::RiskError),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsRow {
    pub total_return: f64,
    pub annual_return: f64,
    pub sharpe: Option<f64>,
    pub sortino: Option<f64>,
    pub gini: Option<f64>,
    pub starr: Option<f64>,
    pub ddr: Option<f64>,
    pub max_drawdown: f64,
    pub yearly_turnover: f64,
}

/// Gini mean difference via the sorted O(T log T) identity
/// `GMD = (2 / (T(T−1))) Σ_k (2k − T + 1) r_(k)` (ascending, 0-indexed).
pub fn gini_mean_difference(returns: &[f64]) -> f64 {
    let t = returns.len();
    if t < 2 {
        return 0.0;
    }
    let mut sorted = returns.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tf = t as f64;
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(k, r)| (2.0 * k as f64 - tf + 1.0) * r)
        .sum();
    2.0 * weighted / (tf * (tf - 1.0))
}

/// Maximum peak-to-trough decline of the compounded wealth curve, in [0, 1).
pub fn max_drawdown(returns: &[f64]) -> Result<f64, MetricsError> {
    let mut wealth = 1.0;
    let mut peak = 1.0;
    let mut worst = 0.0f64;
    for &r in returns {
        wealth *= 1.0 + r;
        if !(wealth > 0.0) {
            return Err(MetricsError::NonPositiveWealth);
        }
        if wealth > peak {
            peak = wealth;
        }
        let dd = 1.0 - wealth / peak;
        if dd > worst {
            worst = dd;
        }
    }
    Ok(worst)
}

/// Compute the full metrics row for one strategy.
pub fn compute_metrics(
    daily_returns: &[f64],
    daily_turnover: &[f64],
    cvar_level: f64,
) -> Result<MetricsRow, MetricsError> {
    let t = daily_returns.len();
    if t < 2 {
        return Err(MetricsError::TooFew(t));
    }
    let tf = t as f64;
    let mut total_wealth = 1.0;
    for &r in daily_returns {
        total_wealth *= 1.0 + r;
        if !(total_wealth > 0.0) {
            return Err(MetricsError::NonPositiveWealth);
        }
    }
    let total_return = total_wealth - 1.0;
    let annual_return = math::powf(total_wealth, TRADING_DAYS_PER_YEAR / tf) - 1.0;

    let mean = math::mean(daily_returns);
    let std = math::sqrt(math::sample_variance(daily_returns));
    let sharpe = (std > 0.0).then(|| mean / std);

    let downside = math::sqrt(
        daily_returns
            .iter()
            .map(|&r| {
                let d = r.min(0.0);
                d * d
            })
            .sum::<f64>()
            / tf,
    );
    let sortino = (downside > 0.0).then(|| mean / downside);

    let gmd = gini_mean_difference(daily_returns);
    let gini = (gmd > 0.0).then(|| mean / gmd);

    let losses: Vec<f64> = daily_returns.iter().map(|r| -r).collect();
    let (cvar, _) = risk::cvar_from_objective(&losses, cvar_level)?;
    let starr = (cvar > 0.0).then(|| mean / cvar);

    let mdd = max_drawdown(daily_returns)?;
    let ddr = (mdd > 0.0).then(|| total_return / mdd);

    let yearly_turnover =
        TRADING_DAYS_PER_YEAR / tf * daily_turnover.iter().sum::<f64>();

    Ok(MetricsRow {
        total_return,
        annual_return,
        sharpe,
        sortino,
        gini,
        starr,
        ddr,
        max_drawdown: mdd,
        yearly_turnover,
    })
}

/// One strategy's row in the report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub id: String,
    /// "std" or "bl".
    pub mode_label: String,
    pub lambda: f64,
    pub alpha: f64,
    pub rho: f64,
    pub beta: f64,
    pub metrics: MetricsRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub title: String,
    pub header: String,
    pub rows: Vec<String>,
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "NA".to_string(),
    }
}

fn metric_cells(m: &MetricsRow) -> String {
    format!(
        "{:.4},{:.4},{},{},{},{},{}",
        m.total_return,
        m.annual_return,
        fmt_opt(m.sharpe),
        fmt_opt(m.sortino),
        fmt_opt(m.gini),
        fmt_opt(m.starr),
        fmt_opt(m.ddr),
    )
}

/// Benchmark table in the reference column order
/// (Total Return, Annual Return, Sharpe, Sortino, Gini, STARR, DDR).
pub fn benchmark_table(row: &MetricsRow) -> ReportTable {
    ReportTable {
        title: "benchmark".to_string(),
        header: "total_return,annual_return,sharpe,sortino,gini,starr,ddr".to_string(),
        rows: alloc::vec![metric_cells(row)],
    }
}

/// Partition strategy rows into one table per (mode, ρ, β), each sorted by
/// (λ, α). The default grid yields 14 tables: 1·2 standard + 6·2 BL.
pub fn strategy_tables(entries: &[ReportEntry]) -> Vec<ReportTable> {
    let mut groups: Vec<(String, f64, f64)> = entries
        .iter()
        .map(|e| (e.mode_label.clone(), e.rho, e.beta))
        .collect();
    groups.sort_by(|a, b| {
        // "std" sorts before "bl" by convention: standard first, as in the
        // reference layout.
        let rank = |m: &str| if m == "std" { 0 } else { 1 };
        rank(&a.0)
            .cmp(&rank(&b.0))
            .then(a.1.partial_cmp(&b.1).unwrap())
            .then(a.2.partial_cmp(&b.2).unwrap())
    });
    groups.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1 && a.2 == b.2);

    groups
        .into_iter()
        .map(|(mode, rho, beta)| {
            let mut members: Vec<&ReportEntry> = entries
                .iter()
                .filter(|e| e.mode_label == mode && e.rho == rho && e.beta == beta)
                .collect();
            members.sort_by(|a, b| {
                a.lambda
                    .partial_cmp(&b.lambda)
                    .unwrap()
                    .then(a.alpha.partial_cmp(&b.alpha).unwrap())
            });
            let rows = members
                .iter()
                .map(|e| {
                    format!(
                        "{},{},{},{},{:.4}",
                        e.id,
                        e.lambda,
                        e.alpha,
                        metric_cells(&e.metrics),
                        e.metrics.yearly_turnover
                    )
                })
                .collect();
            ReportTable {
                title: format!("mode={mode} rho={rho} beta={beta}"),
                header:
                    "strategy,lambda,alpha,total_return,annual_return,sharpe,sortino,gini,starr,ddr,yearly_turnover"
                        .to_string(),
                rows,
            }
        })
        .collect()
}

/// Render the benchmark table followed by the per-(mode, ρ, β) tables as
/// delimiter-separated text.
pub fn format_report(entries: &[ReportEntry], benchmark: &MetricsRow) -> String {
    let mut out = String::new();
    let mut tables = alloc::vec![benchmark_table(benchmark)];
    tables.extend(strategy_tables(entries));
    for t in &tables {
        out.push_str("# ");
        out.push_str(&t.title);
        out.push('\n');
        out.push_str(&t.header);
        out.push('\n');
        for r in &t.rows {
            out.push_str(r);
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
