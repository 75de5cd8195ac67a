//! Shared synthetic-market fixture for the integration suites.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use esgbl_core::garch::{self, ArmaGarchParams};
use esgbl_core::market::{load_prices_from_str, Date, EsgTable, ReturnPanel};
use esgbl_core::nig::NigParams;
use esgbl_core::rng;
use esgbl_core::scenario;
use rand::Rng;

/// Deterministic synthetic market: correlated NIG innovations driven through
/// per-asset ARMA-GARCH dynamics, price levels, yearly ESG scores, and index
/// weights. `esg_gap` removes asset 0's scores before the panel's midpoint
/// year, which reproduces the coverage-driven exclusion case.
pub fn synthetic_market(
    n_assets: usize,
    n_days: usize,
    seed: u64,
    esg_gap: bool,
) -> (ReturnPanel, EsgTable) {
    let mut r = rng::derive_stream(seed, &[0x6d61726b6574]);

    let params: Vec<ArmaGarchParams> = (0..n_assets)
        .map(|_| {
            let persistence = 0.88 + 0.07 * r.gen::<f64>();
            let arch_share = 0.05 + 0.07 * r.gen::<f64>();
            let sd = 0.008 + 0.008 * r.gen::<f64>();
            ArmaGarchParams {
                mean_const: 1e-4 + 5e-4 * r.gen::<f64>(),
                ar: -0.08 + 0.16 * r.gen::<f64>(),
                ma: -0.08 + 0.16 * r.gen::<f64>(),
                var_const: sd * sd * (1.0 - persistence),
                arch: persistence * arch_share,
                garch: persistence * (1.0 - arch_share),
                loglik: 0.0,
            }
        })
        .collect();

    let shapes: Vec<NigParams> = (0..n_assets)
        .map(|_| {
            let alpha = 1.2 + 1.8 * r.gen::<f64>();
            let beta = alpha * (-0.25 + 0.35 * r.gen::<f64>());
            NigParams::standardized(alpha, beta).unwrap()
        })
        .collect();

    // Single-factor correlation, mixed through its Cholesky factor.
    let rho = 0.2 + 0.3 * r.gen::<f64>();
    let mut corr = esgbl_core::linalg::Matrix::identity(n_assets);
    for i in 0..n_assets {
        for j in 0..n_assets {
            if i != j {
                corr[(i, j)] = rho;
            }
        }
    }
    let chol = corr.cholesky().unwrap();
    let draws = scenario::standardized_draws(&shapes, n_days, seed ^ 0xabcd).unwrap();
    let mixed = scenario::mix_draws(&draws, &chol).unwrap();

    let mut returns: Vec<Vec<f64>> = Vec::with_capacity(n_assets);
    for j in 0..n_assets {
        let z: Vec<f64> = (0..n_days).map(|t| mixed[(t, j)]).collect();
        let (series, _) = garch::simulate_path(&params[j], &z);
        returns.push(series);
    }

    let dates = synthetic_dates(2013, n_days + 1);
    let mut prices = String::from("date");
    let tickers: Vec<String> = (0..n_assets).map(|i| format!("A{i:02}")).collect();
    for t in &tickers {
        write!(prices, ",{t}").unwrap();
    }
    prices.push('\n');
    let mut levels: Vec<f64> = (0..n_assets).map(|i| 50.0 + 10.0 * i as f64).collect();
    for (row, date) in dates.iter().enumerate() {
        write!(prices, "{date}").unwrap();
        for (j, level) in levels.iter_mut().enumerate() {
            if row > 0 {
                *level *= 1.0 + returns[j][row - 1];
            }
            write!(prices, ",{level}").unwrap();
        }
        prices.push('\n');
    }
    let panel = load_prices_from_str(&prices).unwrap();

    let first_year = dates.first().unwrap().year;
    let last_year = dates.last().unwrap().year;
    let gap_until = (first_year + last_year) / 2;
    let mut scores = BTreeMap::new();
    for year in (first_year - 1)..=last_year {
        for (j, t) in tickers.iter().enumerate() {
            if esg_gap && j == 0 && year < gap_until {
                continue;
            }
            let base = 30.0 + 60.0 * ((j * 37 + 11) % 100) as f64 / 100.0;
            let drift = (year - first_year) as f64 * 1.5;
            scores.insert((year, t.clone()), base + drift);
        }
    }
    let total: f64 = (1..=n_assets).map(|i| i as f64).sum();
    let index_weights: BTreeMap<String, f64> = tickers
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), (i + 1) as f64 / total))
        .collect();
    let esg = EsgTable::new(scores, index_weights).unwrap();
    (panel, esg)
}

/// Strictly increasing synthetic trading dates: days 1..=28, months 1..=12.
pub fn synthetic_dates(start_year: i32, n: usize) -> Vec<Date> {
    let mut out = Vec::with_capacity(n);
    let (mut y, mut m, mut d) = (start_year, 1u8, 2u8);
    while out.len() < n {
        out.push(Date::new(y, m, d));
        d += 1;
        if d > 28 {
            d = 1;
            m += 1;
            if m > 12 {
                m = 1;
                y += 1;
            }
        }
    }
    out
}
