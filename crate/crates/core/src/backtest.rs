//! Rolling-window daily-rebalance engine over the hyperparameter grid.
//!
//! Timing convention: the allocation for prediction day `p` is fitted on the
//! window of `W` returns ending the day before (`rows [p-W, p)`), applied to
//! day `p`'s realized returns, and the portfolio then drifts with the market
//! move. Nothing on or after row `p` enters the day-`p` decision, which is
//! what the truncation-equivalence test pins down.
//!
//! The grid runner advances all strategies one day at a time so per-day model
//! fits and scenario draws are computed once and shared. Every stochastic
//! quantity is keyed by `(master seed, prediction row, CVaR level, asset)`,
//! so results are independent of strategy order and of how the inner loop is
//! parallelized.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::black_litterman::{self, BlError, BlViews};
use crate::garch::{self, GarchError};
use crate::linalg::{dot, l1_distance, Matrix};
use crate::market::{
    active_universe, benchmark_weights, Date, EsgTable, MarketError, ReturnPanel,
};
use crate::metrics::{self, MetricsError, MetricsRow};
use crate::nig::{self, NigError, NigParams};
use crate::optimizer::{self, OptimizerError, WeightBounds};
use crate::rng;
use crate::scenario::{self, ScenarioError};
use crate::shrinkage::{self, Normalization, ShrinkMode, ShrinkageSpec};

const SCENARIO_TAG: u64 = 0x7363_656e;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BacktestError {
    #[error("panel has {have} return rows; window {window} plus at least one test day needed")]
    PanelTooShort { have: usize, window: usize },
    #[error("universe collapsed on day {day}: all held assets were excluded")]
    UniverseCollapse { day: usize },
    #[error("invalid engine configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Garch(#[from] GarchError),
    #[error(transparent)]
    Nig(#[from] NigError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    BlackLitterman(#[from] BlError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Mode {
    Standard,
    BlackLitterman,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Standard => "std",
            Mode::BlackLitterman => "bl",
        }
    }
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StrategyConfig {
    pub mode: Mode,
    /// ESG shrinkage weight λ.
    pub lambda: f64,
    /// Reward weight α in the mean-CVaR objective.
    pub alpha: f64,
    /// Turnover penalty ρ.
    pub rho: f64,
    /// CVaR confidence level β.
    pub beta: f64,
}

impl StrategyConfig {
    pub fn id(&self) -> String {
        format!(
            "{}-l{}-a{}-r{}-b{}",
            self.mode.label(),
            self.lambda,
            self.alpha,
            self.rho,
            self.beta
        )
    }
}

/// Hyperparameter grid specification.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSpec {
    pub modes: Vec<Mode>,
    pub lambdas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub rhos_standard: Vec<f64>,
    pub rhos_black_litterman: Vec<f64>,
    pub betas: Vec<f64>,
}

impl GridSpec {
    /// The reference grid: 4 λ × 11 α × (1 standard + 6 BL ρ) × 2 β = 616.
    pub fn paper_default() -> Self {
        GridSpec {
            modes: vec![Mode::Standard, Mode::BlackLitterman],
            lambdas: vec![0.0, 0.25, 0.5, 0.7],
            alphas: (0..=10).map(|k| k as f64 / 10.0).collect(),
            rhos_standard: vec![5e-4],
            rhos_black_litterman: vec![5e-4, 10e-4, 15e-4, 20e-4, 30e-4, 40e-4],
            betas: vec![0.95, 0.99],
        }
    }

    /// Deterministic expansion ordered by (mode, λ, α, ρ, β).
    pub fn expand(&self) -> Vec<StrategyConfig> {
        let mut out = Vec::new();
        for &mode in &self.modes {
            let rhos = match mode {
                Mode::Standard => &self.rhos_standard,
                Mode::BlackLitterman => &self.rhos_black_litterman,
            };
            for &lambda in &self.lambdas {
                for &alpha in &self.alphas {
                    for &rho in rhos {
                        for &beta in &self.betas {
                            out.push(StrategyConfig {
                                mode,
                                lambda,
                                alpha,
                                rho,
                                beta,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Which matrix mixes the independent draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Mixing {
    /// Residual correlation with the one-step GARCH volatility as scale.
    Correlation,
    /// Cholesky of the window return covariance (the literal construction);
    /// the GARCH scale is not applied a second time.
    Covariance,
}

/// Investor view with picks by ticker, resolved against each day's universe.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ViewSpec {
    pub picks: Vec<(String, f64)>,
    pub value: f64,
    pub uncertainty: f64,
}

/// Engine-level constants shared by every strategy in a run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EngineConfig {
    /// Rolling window length W (number of returns).
    pub window: usize,
    /// Scenario count q.
    pub scenario_count: usize,
    /// Prior-uncertainty scale τ.
    pub tau: f64,
    /// Risk-aversion δ in the equilibrium premium.
    pub risk_aversion: f64,
    /// ESG-to-return conversion scale; `None` resolves per window to the
    /// cross-sectional std of mean returns.
    pub kappa: Option<f64>,
    pub normalization: Normalization,
    pub shrink_mode: ShrinkMode,
    pub mixing: Mixing,
    pub bounds: WeightBounds,
    /// Master seed; every stream is derived from it.
    pub seed: u64,
    /// Refit model parameters every k days (filter-only in between).
    pub refit_every: usize,
    /// Cap on the number of test days (None = run to the end of the panel).
    pub test_days: Option<usize>,
    pub views: Vec<ViewSpec>,
}

impl EngineConfig {
    /// Sensible defaults around a mandatory seed; window and scenario count
    /// follow the reference protocol.
    pub fn with_seed(seed: u64) -> Self {
        EngineConfig {
            window: 1007,
            scenario_count: 10_000,
            tau: 0.05,
            risk_aversion: 2.5,
            kappa: None,
            normalization: Normalization::ZScore,
            shrink_mode: ShrinkMode::Mean,
            mixing: Mixing::Correlation,
            bounds: WeightBounds::LongOnly,
            seed,
            refit_every: 1,
            test_days: None,
            views: Vec::new(),
        }
    }
}

/// Per-asset fitted marginal for one day.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetMarginal {
    pub ticker: String,
    pub garch: garch::ArmaGarchParams,
    pub nig: NigParams,
    /// One-step conditional mean of the fitted series.
    pub forecast_mean: f64,
    /// One-step conditional volatility.
    pub forecast_sigma: f64,
}

/// Everything the strategies share on a given day.
#[derive(Debug, Clone)]
pub struct DayArtifacts {
    pub day: usize,
    /// Prediction row in the panel.
    pub row: usize,
    pub date: Date,
    pub universe: Vec<usize>,
    pub marginals: Vec<AssetMarginal>,
    /// Lower-triangular mixing factor.
    pub chol: Matrix,
    /// Jitter blended in to reach positive definiteness (0 when clean).
    pub mixing_jitter: f64,
    /// Per-asset scenario scale (forecast σ, or 1 in covariance mixing).
    pub mixing_sigmas: Vec<f64>,
    /// Sample covariance of raw window returns (Black-Litterman Σ).
    pub window_cov: Matrix,
    /// Renormalized index weights over the universe.
    pub bench_weights: Vec<f64>,
    /// Raw ESG scores effective at `date`.
    pub raw_scores: Vec<f64>,
    /// Window-resolved automatic conversion scale.
    pub auto_kappa: f64,
    pub events: Vec<String>,
}

impl DayArtifacts {
    pub fn forecast_means(&self) -> Vec<f64> {
        self.marginals.iter().map(|m| m.forecast_mean).collect()
    }

    fn nig_shapes(&self) -> Vec<NigParams> {
        self.marginals.iter().map(|m| m.nig).collect()
    }
}

/// Marginal-fit cache key: `None` in mean-shrink mode (fits are shared by all
/// strategies), the λ bits in observation-shrink mode (the fitted series
/// depends on λ).
pub type FitKey = Option<u64>;

#[derive(Debug, Clone, Default)]
struct FitAnchor {
    params: BTreeMap<String, (garch::ArmaGarchParams, NigParams)>,
}

pub struct Backtester<'a> {
    panel: &'a ReturnPanel,
    esg: &'a EsgTable,
    config: &'a EngineConfig,
    first_row: usize,
    days: usize,
}

impl<'a> Backtester<'a> {
    pub fn new(
        panel: &'a ReturnPanel,
        esg: &'a EsgTable,
        config: &'a EngineConfig,
    ) -> Result<Self, BacktestError> {
        if config.window < 2 {
            return Err(BacktestError::BadConfig("window must be at least 2".into()));
        }
        if config.refit_every == 0 {
            return Err(BacktestError::BadConfig("refit_every must be ≥ 1".into()));
        }
        if config.scenario_count == 0 {
            return Err(BacktestError::BadConfig("scenario count must be ≥ 1".into()));
        }
        if panel.n_dates() <= config.window {
            return Err(BacktestError::PanelTooShort {
                have: panel.n_dates(),
                window: config.window,
            });
        }
        let mut days = panel.n_dates() - config.window;
        if let Some(cap) = config.test_days {
            if cap == 0 {
                return Err(BacktestError::BadConfig("test_days must be ≥ 1".into()));
            }
            days = days.min(cap);
        }
        Ok(Backtester {
            panel,
            esg,
            config,
            first_row: config.window,
            days,
        })
    }

    pub fn day_count(&self) -> usize {
        self.days
    }

    pub fn prediction_row(&self, day: usize) -> usize {
        self.first_row + day
    }

    pub fn panel(&self) -> &ReturnPanel {
        self.panel
    }

    pub fn config(&self) -> &EngineConfig {
        self.config
    }

    fn fit_key(&self, strategy: &StrategyConfig) -> FitKey {
        match self.config.shrink_mode {
            ShrinkMode::Mean => None,
            ShrinkMode::Observations => Some(strategy.lambda.to_bits()),
        }
    }

    /// Fit (or carry forward) the per-day shared artifacts.
    fn compute_day(
        &self,
        day: usize,
        key: FitKey,
        anchor: Option<&FitAnchor>,
    ) -> Result<(DayArtifacts, FitAnchor), BacktestError> {
        let row = self.prediction_row(day);
        let start = row - self.config.window;
        let date = self.panel.dates()[row];
        let universe = active_universe(self.panel, self.esg, start, row, date)?;
        let tickers: Vec<String> = universe
            .iter()
            .map(|&c| self.panel.tickers()[c].clone())
            .collect();
        let mut events = Vec::new();

        let raw_scores: Vec<f64> = tickers
            .iter()
            .map(|t| self.esg.score_at(date, t).expect("universe is scored"))
            .collect();
        let bench_weights = benchmark_weights(self.esg, self.panel, &universe)?;

        // Raw window, per-asset series and covariance.
        let raw_window = self.panel.window_matrix(&universe, start, row);
        let window_cov = crate::linalg::sample_covariance(&raw_window);
        let mean_returns: Vec<f64> = (0..universe.len())
            .map(|j| crate::math::mean(&raw_window.column(j)))
            .collect();
        let auto_kappa = shrinkage::auto_kappa(&mean_returns);

        // The fitted series: raw returns, or the observation-level ESG blend.
        let fitted_series: Vec<Vec<f64>> = match key {
            None => (0..universe.len()).map(|j| raw_window.column(j)).collect(),
            Some(lambda_bits) => {
                let lambda = f64::from_bits(lambda_bits);
                let spec = ShrinkageSpec {
                    lambda,
                    kappa: self.config.kappa.unwrap_or(auto_kappa),
                    normalization: self.config.normalization,
                };
                let xi = shrinkage::normalize_scores(&raw_scores, &spec);
                (0..universe.len())
                    .map(|j| {
                        raw_window
                            .column(j)
                            .into_iter()
                            .map(|x| (1.0 - lambda) * x + lambda * xi[j])
                            .collect()
                    })
                    .collect()
            }
        };

        let reuse = anchor.filter(|_| day % self.config.refit_every != 0);
        let mut marginals = Vec::with_capacity(universe.len());
        let mut z_panel = Matrix::zeros(self.config.window, universe.len());
        for (j, ticker) in tickers.iter().enumerate() {
            let series = &fitted_series[j];
            let reused = reuse.and_then(|a| a.params.get(ticker).copied());
            let (garch_params, nig_params) = match reused {
                Some(pair) => pair,
                None => {
                    let garch_params =
                        match garch::fit_arma_garch(series, &garch::FitOptions::default()) {
                            Ok(p) => p,
                            Err(GarchError::NonConvergence { best, evals, .. }) => {
                                events.push(format!(
                                    "day {day} {ticker}: volatility fit stopped at the \
                                     evaluation budget ({evals}); using best parameters"
                                ));
                                best
                            }
                            Err(e) => return Err(e.into()),
                        };
                    let filtered = garch::filter_residuals(&garch_params, series)?;
                    let nig_params = match nig::fit_standardized(
                        &filtered.standardized,
                        &nig::NigFitOptions::default(),
                    ) {
                        Ok(p) => p,
                        Err(NigError::BoundaryBeta { ratio }) => {
                            // The window is more skewed than the family can
                            // express; refit with the asymmetry capped.
                            events.push(format!(
                                "day {day} {ticker}: marginal fit hit the asymmetry \
                                 boundary ({ratio:.4}); refit with |beta/alpha| ≤ 0.9"
                            ));
                            nig::fit_standardized(
                                &filtered.standardized,
                                &nig::NigFitOptions {
                                    asymmetry_cap: 0.9,
                                    ..nig::NigFitOptions::default()
                                },
                            )?
                        }
                        Err(e) => return Err(e.into()),
                    };
                    (garch_params, nig_params)
                }
            };
            let filtered = garch::filter_residuals(&garch_params, series)?;
            for (t, z) in filtered.standardized.iter().enumerate() {
                z_panel[(t, j)] = *z;
            }
            let (mu, variance) = garch::forecast_one_step(&garch_params, &filtered.state);
            marginals.push(AssetMarginal {
                ticker: ticker.clone(),
                garch: garch_params,
                nig: nig_params,
                forecast_mean: mu,
                forecast_sigma: crate::math::sqrt(variance),
            });
        }

        let (chol, mixing_jitter, mixing_sigmas) = match self.config.mixing {
            Mixing::Correlation => {
                let corr = scenario::residual_correlation(&z_panel)?;
                if corr.jitter > 0.0 {
                    events.push(format!(
                        "day {day}: residual correlation conditioned with jitter {:e}",
                        corr.jitter
                    ));
                }
                let chol = corr.matrix.cholesky().map_err(ScenarioError::from)?;
                let sigmas = marginals.iter().map(|m| m.forecast_sigma).collect();
                (chol, corr.jitter, sigmas)
            }
            Mixing::Covariance => {
                let fitted_matrix = {
                    let mut m = Matrix::zeros(self.config.window, universe.len());
                    for (j, series) in fitted_series.iter().enumerate() {
                        for (t, v) in series.iter().enumerate() {
                            m[(t, j)] = *v;
                        }
                    }
                    m
                };
                let cov = crate::linalg::sample_covariance(&fitted_matrix);
                let (conditioned, jitter) = condition_covariance(cov)?;
                if jitter > 0.0 {
                    events.push(format!(
                        "day {day}: window covariance conditioned with jitter {jitter:e}"
                    ));
                }
                let chol = conditioned.cholesky().map_err(ScenarioError::from)?;
                (chol, jitter, vec![1.0; universe.len()])
            }
        };

        let new_anchor = if day % self.config.refit_every == 0 || anchor.is_none() {
            FitAnchor {
                params: marginals
                    .iter()
                    .map(|m| (m.ticker.clone(), (m.garch, m.nig)))
                    .collect(),
            }
        } else {
            anchor.cloned().unwrap_or_default()
        };

        Ok((
            DayArtifacts {
                day,
                row,
                date,
                universe,
                marginals,
                chol,
                mixing_jitter,
                mixing_sigmas,
                window_cov,
                bench_weights,
                raw_scores,
                auto_kappa,
                events,
            },
            new_anchor,
        ))
    }

    /// The derived seed feeding the scenario draws for a given prediction
    /// row and CVaR level. Part of the determinism contract: strategies with
    /// the same β share one draw per day, and the stream does not depend on
    /// execution order.
    pub fn scenario_seed(&self, prediction_row: usize, cvar_level: f64) -> u64 {
        rng::derive_seed(
            self.config.seed,
            &[SCENARIO_TAG, prediction_row as u64, cvar_level.to_bits()],
        )
    }

    /// Mixed standardized draws shared by every strategy with this CVaR
    /// level: independent per-asset NIG draws seeded by
    /// (master, prediction row, β), mixed through the day's Cholesky factor.
    pub fn mixed_draws(
        &self,
        artifacts: &DayArtifacts,
        beta: f64,
    ) -> Result<Matrix, BacktestError> {
        let seed = self.scenario_seed(artifacts.row, beta);
        let draws =
            scenario::standardized_draws(&artifacts.nig_shapes(), self.config.scenario_count, seed)?;
        Ok(scenario::mix_draws(&draws, &artifacts.chol)?)
    }

    /// Run one strategy end to end (equivalent to a grid of one).
    pub fn run_strategy(
        &self,
        strategy: &StrategyConfig,
    ) -> Result<BacktestResult, BacktestError> {
        let (mut results, _) = self.run_grid(core::slice::from_ref(strategy));
        results.pop().expect("one strategy in, one result out").1
    }

    /// Buy-and-hold of the renormalized index weights, drifting daily and
    /// reset only when the universe changes.
    pub fn run_benchmark(&self) -> Result<BacktestResult, BacktestError> {
        let mut state: Option<(Vec<usize>, Vec<f64>)> = None;
        let mut recorder = Recorder::new(self.panel.n_assets());
        for day in 0..self.days {
            let row = self.prediction_row(day);
            let start = row - self.config.window;
            let date = self.panel.dates()[row];
            let universe = active_universe(self.panel, self.esg, start, row, date)?;
            let (weights, prev_for_turnover) = match &state {
                Some((held_universe, drifted)) if *held_universe == universe => {
                    (drifted.clone(), drifted.clone())
                }
                Some((held_universe, drifted)) => {
                    let w = benchmark_weights(self.esg, self.panel, &universe)?;
                    recorder
                        .events
                        .push(format!("day {day}: universe changed, benchmark weights reset"));
                    let held = remap_holdings(held_universe, drifted, &universe)
                        .ok_or(BacktestError::UniverseCollapse { day })?;
                    (w, held)
                }
                None => {
                    let w = benchmark_weights(self.esg, self.panel, &universe)?;
                    (w.clone(), w)
                }
            };
            let turnover = l1_distance(&weights, &prev_for_turnover);
            let drifted = recorder.record_day(self.panel, row, date, &universe, &weights, turnover)?;
            state = Some((universe, drifted));
        }
        recorder.finish("benchmark".to_string(), None, 0.95)
    }

    /// Run a set of strategies day by day with shared per-day artifacts.
    ///
    /// Individual strategy failures are recorded and do not affect the rest.
    /// Returns per-strategy results (in input order) plus the engine event
    /// log (fit fallbacks, conditioning notices).
    #[allow(clippy::type_complexity)]
    pub fn run_grid(
        &self,
        strategies: &[StrategyConfig],
    ) -> (Vec<(String, Result<BacktestResult, BacktestError>)>, Vec<String>) {
        self.run_grid_with(strategies, |bt, runs, jobs| {
            for (run, job) in runs.iter_mut().zip(jobs) {
                if let Some(job) = job {
                    run.apply(bt, job);
                }
            }
        })
    }

    /// [`Backtester::run_grid`] with a pluggable per-day stepper.
    ///
    /// The stepper receives the strategy states and, aligned with them, the
    /// day's job for each live strategy; it must call
    /// [`StrategyRun::apply`] once per `Some` job. Each job touches only its
    /// own state, so steppers are free to run them in parallel — results are
    /// identical to the serial order by construction.
    #[allow(clippy::type_complexity)]
    pub fn run_grid_with<F>(
        &self,
        strategies: &[StrategyConfig],
        mut stepper: F,
    ) -> (Vec<(String, Result<BacktestResult, BacktestError>)>, Vec<String>)
    where
        F: FnMut(&Backtester, &mut [StrategyRun], &[Option<DayJob>]),
    {
        let mut runs: Vec<StrategyRun> = strategies
            .iter()
            .map(|s| StrategyRun::new(*s, self.panel.n_assets()))
            .collect();
        let mut engine_events: Vec<String> = Vec::new();
        let mut anchors: BTreeMap<FitKey, FitAnchor> = BTreeMap::new();

        for day in 0..self.days {
            // Artifact keys needed by strategies still alive.
            let mut keys: Vec<FitKey> = runs
                .iter()
                .filter(|r| r.error.is_none())
                .map(|r| self.fit_key(&r.config))
                .collect();
            keys.sort_unstable();
            keys.dedup();
            if keys.is_empty() {
                break;
            }

            let mut artifacts: BTreeMap<FitKey, Arc<DayArtifacts>> = BTreeMap::new();
            let mut failures: BTreeMap<FitKey, BacktestError> = BTreeMap::new();
            for key in &keys {
                match self.compute_day(day, *key, anchors.get(key)) {
                    Ok((art, anchor)) => {
                        engine_events.extend(art.events.iter().cloned());
                        anchors.insert(*key, anchor);
                        artifacts.insert(*key, Arc::new(art));
                    }
                    Err(e) => {
                        failures.insert(*key, e);
                    }
                }
            }

            // Shared mixed draws per (fit key, β).
            let mut draw_cache: BTreeMap<(FitKey, u64), Arc<Matrix>> = BTreeMap::new();
            for run in runs.iter().filter(|r| r.error.is_none()) {
                let key = self.fit_key(&run.config);
                if let Some(art) = artifacts.get(&key) {
                    let cache_key = (key, run.config.beta.to_bits());
                    if !draw_cache.contains_key(&cache_key) {
                        match self.mixed_draws(art, run.config.beta) {
                            Ok(m) => {
                                draw_cache.insert(cache_key, Arc::new(m));
                            }
                            Err(e) => {
                                failures.entry(key).or_insert(e);
                            }
                        }
                    }
                }
            }

            let mut jobs: Vec<Option<DayJob>> = Vec::with_capacity(runs.len());
            for run in &mut runs {
                if run.error.is_some() {
                    jobs.push(None);
                    continue;
                }
                let key = self.fit_key(&run.config);
                match (
                    artifacts.get(&key),
                    draw_cache.get(&(key, run.config.beta.to_bits())),
                ) {
                    (Some(art), Some(mixed)) => jobs.push(Some(DayJob {
                        artifacts: Arc::clone(art),
                        mixed: Arc::clone(mixed),
                    })),
                    _ => {
                        let err = failures
                            .get(&key)
                            .cloned()
                            .unwrap_or_else(|| BacktestError::BadConfig("artifact missing".into()));
                        run.error = Some(err);
                        jobs.push(None);
                    }
                }
            }
            stepper(self, &mut runs, &jobs);
        }

        let results = runs
            .into_iter()
            .map(|r| {
                let id = r.config.id();
                (id, r.into_result())
            })
            .collect();
        (results, engine_events)
    }
}

/// One strategy's work for one day: the shared artifacts plus the mixed
/// draws for its CVaR level.
#[derive(Debug, Clone)]
pub struct DayJob {
    pub artifacts: Arc<DayArtifacts>,
    pub mixed: Arc<Matrix>,
}

/// Diagonal conditioning for covariance matrices (scale-aware jitter).
fn condition_covariance(cov: Matrix) -> Result<(Matrix, f64), BacktestError> {
    if cov.cholesky().is_ok() {
        return Ok((cov, 0.0));
    }
    let m = cov.nrows();
    let scale = (0..m).map(|i| cov[(i, i)]).sum::<f64>() / m as f64;
    let mut jitter = 1e-10;
    while jitter <= 1e-6 {
        let mut c = cov.clone();
        for i in 0..m {
            c[(i, i)] += jitter * scale;
        }
        if c.cholesky().is_ok() {
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    Err(BacktestError::Scenario(
        ScenarioError::NotPositiveDefinite { max_jitter: 1e-6 },
    ))
}

/// Per-day record shared by strategy and benchmark runs.
struct Recorder {
    n_assets: usize,
    dates: Vec<Date>,
    returns: Vec<f64>,
    turnover: Vec<f64>,
    wealth: Vec<f64>,
    weights: Vec<Vec<f64>>,
    events: Vec<String>,
    level: f64,
}

impl Recorder {
    fn new(n_assets: usize) -> Self {
        Recorder {
            n_assets,
            dates: Vec::new(),
            returns: Vec::new(),
            turnover: Vec::new(),
            wealth: Vec::new(),
            weights: Vec::new(),
            events: Vec::new(),
            level: 1.0,
        }
    }

    /// Record the day and return the drifted post-move weights.
    fn record_day(
        &mut self,
        panel: &ReturnPanel,
        row: usize,
        date: Date,
        universe: &[usize],
        weights: &[f64],
        turnover: f64,
    ) -> Result<Vec<f64>, BacktestError> {
        let mut realized: Vec<f64> = Vec::with_capacity(universe.len());
        for (&col, _) in universe.iter().zip(weights) {
            if panel.is_available(row, col) {
                realized.push(panel.ret(row, col));
            } else {
                realized.push(0.0);
                self.events.push(format!(
                    "{date}: return missing for {}, treated as flat",
                    panel.tickers()[col]
                ));
            }
        }
        let day_return = dot(weights, &realized);
        let growth = 1.0 + day_return;
        if !(growth > 0.0) {
            return Err(BacktestError::Metrics(MetricsError::NonPositiveWealth));
        }
        let drifted: Vec<f64> = weights
            .iter()
            .zip(&realized)
            .map(|(w, r)| w * (1.0 + r) / growth)
            .collect();

        self.level *= growth;
        self.dates.push(date);
        self.returns.push(day_return);
        self.turnover.push(turnover);
        self.wealth.push(self.level);
        let mut full = vec![0.0; self.n_assets];
        for (&col, &w) in universe.iter().zip(weights) {
            full[col] = w;
        }
        self.weights.push(full);
        Ok(drifted)
    }

    fn finish(
        self,
        id: String,
        config: Option<StrategyConfig>,
        beta: f64,
    ) -> Result<BacktestResult, BacktestError> {
        let metrics = metrics::compute_metrics(&self.returns, &self.turnover, beta)?;
        Ok(BacktestResult {
            id,
            config,
            dates: self.dates,
            daily_returns: self.returns,
            daily_turnover: self.turnover,
            wealth: self.wealth,
            daily_weights: self.weights,
            metrics,
            events: self.events,
        })
    }
}

/// Outcome of one strategy (or benchmark) run.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    pub id: String,
    /// `None` for the benchmark.
    pub config: Option<StrategyConfig>,
    pub dates: Vec<Date>,
    pub daily_returns: Vec<f64>,
    pub daily_turnover: Vec<f64>,
    /// Wealth index after each day (starts from 1.0 before the first day).
    pub wealth: Vec<f64>,
    /// Weights per day, expanded over the full panel asset order
    /// (zero outside the day's universe).
    pub daily_weights: Vec<Vec<f64>>,
    pub metrics: MetricsRow,
    pub events: Vec<String>,
}

impl BacktestResult {
    pub fn report_entry(&self) -> Option<metrics::ReportEntry> {
        let c = self.config?;
        Some(metrics::ReportEntry {
            id: self.id.clone(),
            mode_label: c.mode.label().to_string(),
            lambda: c.lambda,
            alpha: c.alpha,
            rho: c.rho,
            beta: c.beta,
            metrics: self.metrics.clone(),
        })
    }
}

/// Mutable state of one strategy inside the day loop.
pub struct StrategyRun {
    pub config: StrategyConfig,
    holdings: Option<(Vec<usize>, Vec<f64>)>,
    recorder: Recorder,
    error: Option<BacktestError>,
}

impl StrategyRun {
    fn new(config: StrategyConfig, n_assets: usize) -> Self {
        StrategyRun {
            config,
            holdings: None,
            recorder: Recorder::new(n_assets),
            error: None,
        }
    }

    /// Advance this strategy by one day. Failures are latched into the run.
    pub fn apply(&mut self, bt: &Backtester, job: &DayJob) {
        if let Err(e) = self.try_step(bt, &job.artifacts, &job.mixed) {
            self.error = Some(e);
        }
    }

    fn try_step(
        &mut self,
        bt: &Backtester,
        art: &DayArtifacts,
        mixed: &Matrix,
    ) -> Result<(), BacktestError> {
        let engine = bt.config();
        let lambda = self.config.lambda;

        // Pre-rebalance holdings on today's universe.
        let prev = match self.holdings.take() {
            None => black_litterman::blend_weights(&art.bench_weights, &art.raw_scores, lambda)?,
            Some((held_universe, drifted)) => {
                if held_universe == art.universe {
                    drifted
                } else {
                    // Excluded assets' weight redistributed proportionally.
                    let remapped = remap_holdings(&held_universe, &drifted, &art.universe)
                        .ok_or(BacktestError::UniverseCollapse { day: art.day })?;
                    self.recorder.events.push(format!(
                        "{}: universe changed ({} assets), weights renormalized",
                        art.date,
                        art.universe.len()
                    ));
                    remapped
                }
            }
        };

        let kappa = engine.kappa.unwrap_or(art.auto_kappa);
        let spec = ShrinkageSpec {
            lambda,
            kappa,
            normalization: engine.normalization,
        };
        let forecast_means = art.forecast_means();
        let mean = match engine.shrink_mode {
            // Observation mode bakes the blend into the fitted series.
            ShrinkMode::Observations => forecast_means.clone(),
            ShrinkMode::Mean => {
                let xi = shrinkage::normalize_scores(&art.raw_scores, &spec);
                shrinkage::shrink_mean(&forecast_means, &xi, lambda)
            }
        };
        let scenarios = scenario::compose_scenarios(mixed, &art.mixing_sigmas, &mean);

        let expected_returns = match self.config.mode {
            Mode::Standard => mean.clone(),
            Mode::BlackLitterman => {
                let eq = black_litterman::blend_weights(
                    &art.bench_weights,
                    &art.raw_scores,
                    lambda,
                )?;
                let premium =
                    black_litterman::equilibrium_premium(engine.risk_aversion, &art.window_cov, &eq);
                let views = resolve_views(&engine.views, art)?;
                black_litterman::posterior(engine.tau, &art.window_cov, &premium, &views)?.mean
            }
        };

        let solution = optimizer::solve(&optimizer::AllocationProblem {
            expected_returns: &expected_returns,
            scenarios: &scenarios,
            prev_weights: &prev,
            risk_reward: self.config.alpha,
            turnover_penalty: self.config.rho,
            cvar_level: self.config.beta,
            bounds: engine.bounds,
        })?;

        let drifted = self.recorder.record_day(
            bt.panel(),
            art.row,
            art.date,
            &art.universe,
            &solution.weights,
            solution.turnover,
        )?;
        self.holdings = Some((art.universe.clone(), drifted));
        Ok(())
    }

    fn into_result(self) -> Result<BacktestResult, BacktestError> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let beta = self.config.beta;
        let config = self.config;
        self.recorder.finish(config.id(), Some(config), beta)
    }
}

/// Carry holdings onto a changed universe: keep surviving assets' weights,
/// redistribute the excluded weight proportionally, enter new assets at zero.
/// Returns `None` when nothing survives.
fn remap_holdings(
    held_universe: &[usize],
    drifted: &[f64],
    universe: &[usize],
) -> Option<Vec<f64>> {
    let kept: Vec<f64> = universe
        .iter()
        .map(|col| {
            held_universe
                .iter()
                .position(|h| h == col)
                .map_or(0.0, |i| drifted[i])
        })
        .collect();
    let total: f64 = kept.iter().sum();
    if total > 0.0 {
        Some(kept.into_iter().map(|w| w / total).collect())
    } else {
        None
    }
}

/// Resolve ticker-keyed views against the day's universe. Views picking any
/// asset outside the universe are dropped for the day (the asset cannot be
/// traded anyway).
fn resolve_views(views: &[ViewSpec], art: &DayArtifacts) -> Result<BlViews, BacktestError> {
    let m = art.universe.len();
    if views.is_empty() {
        return Ok(BlViews::none(m));
    }
    let tickers: Vec<&str> = art.marginals.iter().map(|mg| mg.ticker.as_str()).collect();
    let mut picks_rows: Vec<Vec<f64>> = Vec::new();
    let mut values = Vec::new();
    let mut uncertainties = Vec::new();
    'views: for v in views {
        let mut row = vec![0.0; m];
        for (ticker, coef) in &v.picks {
            match tickers.iter().position(|t| t == ticker) {
                Some(i) => row[i] = *coef,
                None => continue 'views,
            }
        }
        picks_rows.push(row);
        values.push(v.value);
        uncertainties.push(v.uncertainty);
    }
    Ok(BlViews {
        picks: if picks_rows.is_empty() {
            Matrix::zeros(0, m)
        } else {
            Matrix::from_rows(&picks_rows)
        },
        values,
        uncertainties,
    })
}
