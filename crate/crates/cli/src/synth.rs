//! Synthetic desk-scale dataset generator (`synth` subcommand).
//!
//! Produces a price file, a yearly ESG score file, an index-weight file, and
//! a ready-to-run config, all deterministic in the seed. Returns are built
//! from per-asset ARMA-GARCH dynamics driven by correlated standardized NIG
//! innovations, so the generated market actually exercises the models the
//! engine fits.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::Rng;

use esgbl_core::garch::{self, ArmaGarchParams};
use esgbl_core::linalg::Matrix;
use esgbl_core::nig::NigParams;
use esgbl_core::rng;
use esgbl_core::scenario;

use crate::files::write_text;
use crate::AppError;

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub assets: usize,
    /// Number of price rows (the panel gets one fewer return rows).
    pub days: usize,
    pub seed: u64,
    /// Drop the first asset's ESG scores before the midpoint year.
    pub esg_gap: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            assets: 5,
            days: 810,
            seed: 20170103,
            esg_gap: false,
        }
    }
}

/// Trading days: consecutive weekdays from the start date.
pub fn trading_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
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

pub struct SynthFiles {
    pub prices: String,
    pub esg: String,
    pub index_weights: String,
    pub config: String,
}

pub fn generate(spec: &SynthSpec) -> SynthFiles {
    let mut r = rng::derive_stream(spec.seed, &[0x73796e7468]);
    let n_assets = spec.assets;
    let n_returns = spec.days.saturating_sub(1);

    let params: Vec<ArmaGarchParams> = (0..n_assets)
        .map(|_| {
            let persistence = 0.87 + 0.08 * r.gen::<f64>();
            let arch_share = 0.05 + 0.08 * r.gen::<f64>();
            let sd = 0.007 + 0.009 * r.gen::<f64>();
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
            let alpha = 1.3 + 1.7 * r.gen::<f64>();
            let ratio = -0.25 + 0.35 * r.gen::<f64>();
            NigParams::standardized(alpha, alpha * ratio).unwrap()
        })
        .collect();

    let rho = 0.25 + 0.25 * r.gen::<f64>();
    let mut corr = Matrix::identity(n_assets);
    for i in 0..n_assets {
        for j in 0..n_assets {
            if i != j {
                corr[(i, j)] = rho;
            }
        }
    }
    let chol = corr.cholesky().expect("equicorrelation is positive definite");
    let draws = scenario::standardized_draws(&shapes, n_returns, spec.seed ^ 0x5eed)
        .expect("standardized shapes");
    let mixed = scenario::mix_draws(&draws, &chol).expect("shapes match");

    let tickers: Vec<String> = (0..n_assets).map(|i| format!("SYN{i:02}")).collect();
    let dates = trading_days(NaiveDate::from_ymd_opt(2017, 1, 2).unwrap(), spec.days);

    let mut prices = String::from("date");
    for t in &tickers {
        let _ = write!(prices, ",{t}");
    }
    prices.push('\n');
    let mut levels: Vec<f64> = (0..n_assets).map(|i| 40.0 + 15.0 * i as f64).collect();
    let mut returns: Vec<Vec<f64>> = Vec::with_capacity(n_assets);
    for j in 0..n_assets {
        let z: Vec<f64> = (0..n_returns).map(|t| mixed[(t, j)]).collect();
        let (series, _) = garch::simulate_path(&params[j], &z);
        returns.push(series);
    }
    for (row, date) in dates.iter().enumerate() {
        let _ = write!(prices, "{}", date.format("%Y-%m-%d"));
        for (j, level) in levels.iter_mut().enumerate() {
            if row > 0 {
                *level *= 1.0 + returns[j][row - 1];
            }
            let _ = write!(prices, ",{level}");
        }
        prices.push('\n');
    }

    let first_year = dates.first().unwrap().year();
    let last_year = dates.last().unwrap().year();
    let gap_until = (first_year + last_year) / 2;
    let mut esg = String::from("year");
    for t in &tickers {
        let _ = write!(esg, ",{t}");
    }
    esg.push('\n');
    for year in (first_year - 1)..=last_year {
        let _ = write!(esg, "{year}");
        for (j, _) in tickers.iter().enumerate() {
            if spec.esg_gap && j == 0 && year < gap_until {
                esg.push(',');
                continue;
            }
            let base = 25.0 + 65.0 * ((j * 41 + 17) % 100) as f64 / 100.0;
            let drift = (year - first_year) as f64 * 1.25;
            let _ = write!(esg, ",{}", base + drift);
        }
        esg.push('\n');
    }

    let mut index_weights = String::from("ticker,weight\n");
    let total: f64 = (1..=n_assets).map(|i| i as f64).sum();
    for (i, t) in tickers.iter().enumerate() {
        let _ = writeln!(index_weights, "{t},{}", (i + 1) as f64 / total);
    }

    // Desk-scale grid: 8 standard + 16 BL strategies.
    let config = format!(
        r#"[data]
prices = "prices.csv"
esg = "esg.csv"
index_weights = "index_weights.csv"

[grid]
modes = ["standard", "black_litterman"]
lambdas = [0.0, 0.5]
alphas = [0.3, 0.7]
rhos_standard = [0.0005]
rhos_black_litterman = [0.0005, 0.002]
betas = [0.95, 0.99]

[engine]
window = 700
scenarios = 2000
seed = {seed}
test_days = 100

[output]
dir = "out"
write_weights = true
"#,
        seed = spec.seed
    );

    SynthFiles {
        prices,
        esg,
        index_weights,
        config,
    }
}

/// Write the generated dataset into `dir`.
pub fn write(spec: &SynthSpec, dir: &Path) -> Result<(), AppError> {
    let files = generate(spec);
    write_text(&dir.join("prices.csv"), &files.prices)?;
    write_text(&dir.join("esg.csv"), &files.esg)?;
    write_text(&dir.join("index_weights.csv"), &files.index_weights)?;
    write_text(&dir.join("config.toml"), &files.config)?;
    Ok(())
}
