//! Run configuration: a TOML file with `[data]`, `[grid]`, `[engine]`, and
//! `[output]` sections. The seed is mandatory — there is no nondeterministic
//! default anywhere in a run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use esgbl_core::backtest::{EngineConfig, GridSpec, Mixing, Mode, ViewSpec};
use esgbl_core::optimizer::WeightBounds;
use esgbl_core::shrinkage::{Normalization, ShrinkMode};

use crate::AppError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub grid: GridSection,
    pub engine: EngineSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub prices: PathBuf,
    pub esg: PathBuf,
    pub index_weights: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub modes: Vec<String>,
    pub lambdas: Vec<f64>,
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub rhos_standard: Vec<f64>,
    #[serde(default)]
    pub rhos_black_litterman: Vec<f64>,
    pub betas: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    pub window: usize,
    pub scenarios: usize,
    pub seed: u64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_risk_aversion")]
    pub risk_aversion: f64,
    /// Omitted: resolved per window (cross-sectional std of mean returns).
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default = "default_normalization")]
    pub normalization: String,
    #[serde(default = "default_shrink")]
    pub shrink: String,
    #[serde(default = "default_mixing")]
    pub mixing: String,
    #[serde(default = "default_bounds")]
    pub bounds: String,
    #[serde(default = "default_refit")]
    pub refit_every: usize,
    #[serde(default)]
    pub test_days: Option<usize>,
    #[serde(default)]
    pub views: Vec<ViewSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewSection {
    /// Ticker → pick coefficient.
    pub picks: BTreeMap<String, f64>,
    /// View return (daily units).
    pub value: f64,
    /// View variance, > 0.
    pub uncertainty: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_true")]
    pub write_weights: bool,
}

fn default_tau() -> f64 {
    0.05
}
fn default_risk_aversion() -> f64 {
    2.5
}
fn default_normalization() -> String {
    "zscore".into()
}
fn default_shrink() -> String {
    "mean".into()
}
fn default_mixing() -> String {
    "correlation".into()
}
fn default_bounds() -> String {
    "long_only".into()
}
fn default_refit() -> usize {
    1
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, AppError> {
        let text = std::fs::read_to_string(path).map_err(AppError::io(path.display().to_string()))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Schema-level checks; data-dependent checks happen at load time.
    pub fn validate(&self) -> Result<(), AppError> {
        let bad = |key: &str, msg: String| Err(AppError::Config(format!("{key}: {msg}")));
        if self.grid.modes.is_empty() {
            return bad("grid.modes", "at least one mode required".into());
        }
        for m in &self.grid.modes {
            if parse_mode(m).is_none() {
                return bad("grid.modes", format!("unknown mode `{m}`"));
            }
        }
        if self.grid.lambdas.is_empty() || self.grid.alphas.is_empty() || self.grid.betas.is_empty()
        {
            return bad("grid", "lambdas, alphas, and betas must be non-empty".into());
        }
        for (key, values, lo, hi) in [
            ("grid.lambdas", &self.grid.lambdas, 0.0, 1.0),
            ("grid.alphas", &self.grid.alphas, 0.0, 1.0),
        ] {
            for &v in values {
                if !(lo..=hi).contains(&v) {
                    return bad(key, format!("{v} outside [{lo}, {hi}]"));
                }
            }
        }
        for &b in &self.grid.betas {
            if !(0.5 < b && b < 1.0) {
                return bad("grid.betas", format!("{b} outside (0.5, 1)"));
            }
        }
        let uses = |mode: Mode| self.grid.modes.iter().any(|m| parse_mode(m) == Some(mode));
        if uses(Mode::Standard) && self.grid.rhos_standard.is_empty() {
            return bad("grid.rhos_standard", "required for standard mode".into());
        }
        if uses(Mode::BlackLitterman) && self.grid.rhos_black_litterman.is_empty() {
            return bad(
                "grid.rhos_black_litterman",
                "required for black_litterman mode".into(),
            );
        }
        for (key, values) in [
            ("grid.rhos_standard", &self.grid.rhos_standard),
            ("grid.rhos_black_litterman", &self.grid.rhos_black_litterman),
        ] {
            for &v in values {
                if !(v >= 0.0) {
                    return bad(key, format!("{v} must be ≥ 0"));
                }
            }
        }
        if self.engine.window < 250 {
            return bad(
                "engine.window",
                format!("{} is below the 250-observation fitting minimum", self.engine.window),
            );
        }
        if self.engine.scenarios < 100 {
            return bad(
                "engine.scenarios",
                format!("{} scenarios cannot resolve the CVaR tail", self.engine.scenarios),
            );
        }
        if self.engine.refit_every == 0 {
            return bad("engine.refit_every", "must be ≥ 1".into());
        }
        if !(self.engine.tau > 0.0) {
            return bad("engine.tau", "must be > 0".into());
        }
        if !(self.engine.risk_aversion > 0.0) {
            return bad("engine.risk_aversion", "must be > 0".into());
        }
        if let Some(k) = self.engine.kappa {
            if !(k >= 0.0) {
                return bad("engine.kappa", "must be ≥ 0".into());
            }
        }
        parse_normalization(&self.engine.normalization)
            .ok_or_else(|| AppError::Config(format!(
                "engine.normalization: unknown value `{}`",
                self.engine.normalization
            )))?;
        parse_shrink(&self.engine.shrink).ok_or_else(|| {
            AppError::Config(format!("engine.shrink: unknown value `{}`", self.engine.shrink))
        })?;
        parse_mixing(&self.engine.mixing).ok_or_else(|| {
            AppError::Config(format!("engine.mixing: unknown value `{}`", self.engine.mixing))
        })?;
        parse_bounds(&self.engine.bounds).ok_or_else(|| {
            AppError::Config(format!("engine.bounds: unknown value `{}`", self.engine.bounds))
        })?;
        for (i, v) in self.engine.views.iter().enumerate() {
            if v.picks.is_empty() {
                return bad("engine.views", format!("view {i} picks nothing"));
            }
            if !(v.uncertainty > 0.0) {
                return bad("engine.views", format!("view {i} has non-positive uncertainty"));
            }
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            modes: self
                .grid
                .modes
                .iter()
                .filter_map(|m| parse_mode(m))
                .collect(),
            lambdas: self.grid.lambdas.clone(),
            alphas: self.grid.alphas.clone(),
            rhos_standard: self.grid.rhos_standard.clone(),
            rhos_black_litterman: self.grid.rhos_black_litterman.clone(),
            betas: self.grid.betas.clone(),
        }
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            window: self.engine.window,
            scenario_count: self.engine.scenarios,
            tau: self.engine.tau,
            risk_aversion: self.engine.risk_aversion,
            kappa: self.engine.kappa,
            normalization: parse_normalization(&self.engine.normalization)
                .expect("validated"),
            shrink_mode: parse_shrink(&self.engine.shrink).expect("validated"),
            mixing: parse_mixing(&self.engine.mixing).expect("validated"),
            bounds: parse_bounds(&self.engine.bounds).expect("validated"),
            seed: self.engine.seed,
            refit_every: self.engine.refit_every,
            test_days: self.engine.test_days,
            views: self
                .engine
                .views
                .iter()
                .map(|v| ViewSpec {
                    picks: v.picks.iter().map(|(t, c)| (t.clone(), *c)).collect(),
                    value: v.value,
                    uncertainty: v.uncertainty,
                })
                .collect(),
        }
    }
}

pub fn parse_mode(s: &str) -> Option<Mode> {
    match s {
        "standard" | "std" => Some(Mode::Standard),
        "black_litterman" | "bl" => Some(Mode::BlackLitterman),
        _ => None,
    }
}

fn parse_normalization(s: &str) -> Option<Normalization> {
    match s {
        "zscore" => Some(Normalization::ZScore),
        "minmax" => Some(Normalization::MinMax),
        _ => None,
    }
}

fn parse_shrink(s: &str) -> Option<ShrinkMode> {
    match s {
        "mean" => Some(ShrinkMode::Mean),
        "observations" => Some(ShrinkMode::Observations),
        _ => None,
    }
}

fn parse_mixing(s: &str) -> Option<Mixing> {
    match s {
        "correlation" => Some(Mixing::Correlation),
        "covariance" => Some(Mixing::Covariance),
        _ => None,
    }
}

fn parse_bounds(s: &str) -> Option<WeightBounds> {
    match s {
        "long_only" => Some(WeightBounds::LongOnly),
        "box" => Some(WeightBounds::Box { lower: -0.1 }),
        _ => None,
    }
}
