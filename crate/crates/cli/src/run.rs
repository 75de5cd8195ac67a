//! Orchestration: config validation against the data, the parallel grid
//! driver, and the reproducibility manifest.
//!
//! Nothing written here depends on wall-clock time or thread count, so a
//! rerun with identical inputs produces byte-identical artifacts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use esgbl_core::backtest::{BacktestResult, Backtester, StrategyConfig};
use esgbl_core::market::{EsgTable, ReturnPanel};
use esgbl_core::metrics::{self, MetricsRow};

use crate::config::RunConfig;
use crate::files;
use crate::{AppError, ExitKind};

pub struct LoadedData {
    pub panel: ReturnPanel,
    pub esg: EsgTable,
    /// Input path → sha256 of the raw bytes.
    pub checksums: BTreeMap<String, String>,
}

/// Resolve a data path relative to the config file's directory.
fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

pub fn load_data(config: &RunConfig, base: &Path) -> Result<LoadedData, AppError> {
    let prices = resolve(base, &config.data.prices);
    let esg_path = resolve(base, &config.data.esg);
    let weights = resolve(base, &config.data.index_weights);
    let panel = files::read_panel(&prices)?;
    let esg = files::read_esg(&esg_path, &weights)?;
    let mut checksums = BTreeMap::new();
    for path in [&prices, &esg_path, &weights] {
        checksums.insert(path.display().to_string(), files::sha256_hex(path)?);
    }
    Ok(LoadedData {
        panel,
        esg,
        checksums,
    })
}

#[derive(Debug)]
pub struct ValidationReport {
    pub strategies: usize,
    pub assets: usize,
    pub panel_days: usize,
    pub window: usize,
    pub test_days: usize,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} strategies", self.strategies)?;
        writeln!(f, "{} assets over {} return days", self.assets, self.panel_days)?;
        write!(
            f,
            "window {} leaves {} test days",
            self.window, self.test_days
        )
    }
}

/// Schema checks already ran at load; this adds the data-dependent ones.
pub fn validate(config: &RunConfig, base: &Path) -> Result<ValidationReport, AppError> {
    let data = load_data(config, base)?;
    let window = config.engine.window;
    if data.panel.n_dates() <= window {
        return Err(AppError::Config(format!(
            "engine.window: window of {window} returns needs at least {} price rows, \
             data provides {} return days",
            window + 2,
            data.panel.n_dates()
        )));
    }
    let grid = config.grid_spec().expand();
    if grid.is_empty() {
        return Err(AppError::Config("grid: resolves to zero strategies".into()));
    }
    let mut available = data.panel.n_dates() - window;
    if let Some(cap) = config.engine.test_days {
        if cap == 0 {
            return Err(AppError::Config("engine.test_days: must be ≥ 1".into()));
        }
        available = available.min(cap);
    }
    if available < 2 {
        return Err(AppError::Config(format!(
            "engine.window: at least 2 test days required, {available} available"
        )));
    }
    Ok(ValidationReport {
        strategies: grid.len(),
        assets: data.panel.n_assets(),
        panel_days: data.panel.n_dates(),
        window,
        test_days: available,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub version: String,
    pub seed: u64,
    pub jobs_hint: String,
    pub inputs: BTreeMap<String, String>,
    pub config: RunConfig,
    pub grid: Vec<String>,
    pub statuses: BTreeMap<String, String>,
    pub engine_events: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StrategySummary {
    pub id: String,
    pub mode: String,
    pub lambda: f64,
    pub alpha: f64,
    pub rho: f64,
    pub beta: f64,
    pub status: String,
    pub metrics: Option<MetricsRow>,
    pub events: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    pub run_id: String,
    pub benchmark: MetricsRow,
    pub strategies: Vec<StrategySummary>,
}

pub struct RunOutcome {
    pub exit: ExitKind,
    pub run_id: String,
    pub completed: usize,
    pub failed: usize,
    pub out_dir: PathBuf,
}

/// Run the configured grid and write the artifact tree.
pub fn backtest(
    config: &RunConfig,
    base: &Path,
    out_override: Option<&Path>,
    jobs: usize,
    seed_override: Option<u64>,
    strategy_filter: Option<&str>,
) -> Result<RunOutcome, AppError> {
    validate(config, base)?;
    let data = load_data(config, base)?;

    let mut engine = config.engine_config();
    if let Some(seed) = seed_override {
        engine.seed = seed;
    }
    let full_grid = config.grid_spec().expand();
    let grid = filter_strategies(&full_grid, strategy_filter)?;

    let bt = Backtester::new(&data.panel, &data.esg, &engine)
        .map_err(|e| AppError::Data(format!("backtester setup: {e}")))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| AppError::Config(format!("jobs: {e}")))?;
    let (results, engine_events) = bt.run_grid_with(&grid, |bt, runs, day_jobs| {
        pool.install(|| {
            runs.par_iter_mut()
                .zip(day_jobs.par_iter())
                .for_each(|(run, job)| {
                    if let Some(job) = job {
                        run.apply(bt, job);
                    }
                })
        })
    });
    let benchmark = bt
        .run_benchmark()
        .map_err(|e| AppError::Data(format!("benchmark run: {e}")))?;

    // Run identity: version, resolved seed, config echo, input checksums.
    let config_echo = toml::to_string(config)
        .map_err(|e| AppError::Config(format!("config echo: {e}")))?;
    let mut hasher = Sha256::new();
    hasher.update(env!("CARGO_PKG_VERSION").as_bytes());
    hasher.update(engine.seed.to_le_bytes());
    hasher.update(config_echo.as_bytes());
    for (path, checksum) in &data.checksums {
        hasher.update(path.as_bytes());
        hasher.update(checksum.as_bytes());
    }
    let run_id = hasher
        .finalize()
        .iter()
        .fold(String::new(), |mut acc, b| {
            use std::fmt::Write as _;
            let _ = write!(acc, "{b:02x}");
            acc
        });

    let out_dir = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| resolve(base, &config.output.dir));
    write_outputs(
        &out_dir,
        config,
        &data,
        &engine.seed,
        jobs,
        &run_id,
        &grid,
        &results,
        &benchmark,
        engine_events,
    )?;

    let failed = results.iter().filter(|(_, r)| r.is_err()).count();
    Ok(RunOutcome {
        exit: if failed == 0 {
            ExitKind::Success
        } else {
            ExitKind::Partial
        },
        run_id,
        completed: results.len() - failed,
        failed,
        out_dir,
    })
}

fn filter_strategies(
    grid: &[StrategyConfig],
    selector: Option<&str>,
) -> Result<Vec<StrategyConfig>, AppError> {
    let Some(selector) = selector else {
        return Ok(grid.to_vec());
    };
    let selector = selector.trim();
    if selector.is_empty() || selector == "all" {
        return Ok(grid.to_vec());
    }
    let mut picked = Vec::new();
    for wanted in selector.split(',').map(str::trim) {
        match grid.iter().find(|s| s.id() == wanted) {
            Some(s) => picked.push(*s),
            None => {
                return Err(AppError::Config(format!(
                    "strategies: unknown id `{wanted}`; available: {}",
                    grid.iter()
                        .map(StrategyConfig::id)
                        .collect::<Vec<_>>()
                        .join(", ")
                )))
            }
        }
    }
    Ok(picked)
}

#[allow(clippy::too_many_arguments)]
fn write_outputs(
    out_dir: &Path,
    config: &RunConfig,
    data: &LoadedData,
    seed: &u64,
    jobs: usize,
    run_id: &str,
    grid: &[StrategyConfig],
    results: &[(String, Result<BacktestResult, esgbl_core::backtest::BacktestError>)],
    benchmark: &BacktestResult,
    engine_events: Vec<String>,
) -> Result<(), AppError> {
    let mut statuses = BTreeMap::new();
    let mut entries = Vec::new();
    let mut summaries = Vec::new();
    for ((id, result), strategy) in results.iter().zip(grid) {
        match result {
            Ok(r) => {
                statuses.insert(id.clone(), "ok".to_string());
                if let Some(entry) = r.report_entry() {
                    entries.push(entry);
                }
                summaries.push(StrategySummary {
                    id: id.clone(),
                    mode: strategy.mode.label().to_string(),
                    lambda: strategy.lambda,
                    alpha: strategy.alpha,
                    rho: strategy.rho,
                    beta: strategy.beta,
                    status: "ok".into(),
                    metrics: Some(r.metrics.clone()),
                    events: r.events.clone(),
                });
                files::write_text(&out_dir.join("curves").join(format!("{id}.csv")), &files::curve_csv(r))?;
                files::write_text(&out_dir.join("series").join(format!("{id}.csv")), &files::series_csv(r))?;
                if config.output.write_weights {
                    files::write_text(
                        &out_dir.join("weights").join(format!("{id}.csv")),
                        &files::weights_csv(r, data.panel.tickers()),
                    )?;
                }
            }
            Err(e) => {
                statuses.insert(id.clone(), format!("failed: {e}"));
                summaries.push(StrategySummary {
                    id: id.clone(),
                    mode: strategy.mode.label().to_string(),
                    lambda: strategy.lambda,
                    alpha: strategy.alpha,
                    rho: strategy.rho,
                    beta: strategy.beta,
                    status: format!("failed: {e}"),
                    metrics: None,
                    events: Vec::new(),
                });
            }
        }
    }

    files::write_text(
        &out_dir.join("curves").join("benchmark.csv"),
        &files::curve_csv(benchmark),
    )?;
    files::write_text(
        &out_dir.join("series").join("benchmark.csv"),
        &files::series_csv(benchmark),
    )?;

    let report = metrics::format_report(&entries, &benchmark.metrics);
    files::write_text(&out_dir.join("report.csv"), &report)?;

    let summary = Summary {
        run_id: run_id.to_string(),
        benchmark: benchmark.metrics.clone(),
        strategies: summaries,
    };
    let summary_json = serde_json::to_string_pretty(&summary)
        .map_err(|e| AppError::Data(format!("summary serialization: {e}")))?;
    files::write_text(&out_dir.join("summary.json"), &(summary_json + "\n"))?;

    let manifest = Manifest {
        run_id: run_id.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: *seed,
        jobs_hint: if jobs == 0 {
            "auto".into()
        } else {
            jobs.to_string()
        },
        inputs: data.checksums.clone(),
        config: config.clone(),
        grid: grid.iter().map(StrategyConfig::id).collect(),
        statuses,
        engine_events,
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| AppError::Data(format!("manifest serialization: {e}")))?;
    files::write_text(&out_dir.join("manifest.json"), &(manifest_json + "\n"))?;
    Ok(())
}
