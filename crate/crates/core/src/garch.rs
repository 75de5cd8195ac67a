//! ARMA(1,1)-GARCH(1,1) per-asset conditional mean and volatility.
//!
//! Model: `x_t = c + φ x_{t-1} + θ ε_{t-1} + ε_t`, `σ²_t = ω + a ε²_{t-1} + γ σ²_{t-1}`,
//! fitted by Gaussian maximum likelihood. Recursions start from the
//! pre-sample state `ε = 0`, `σ² = sample variance`, `x = sample mean`, so
//! every observed point carries a recursion value.
//!
//! The variance equation's ARCH coefficient is named `arch` here; it is a
//! parameter distinct from the AR coefficient even though both are commonly
//! written with the same symbol.

use alloc::vec::Vec;

use thiserror::Error;

use crate::math;
use crate::optim::{self, NelderMeadOptions};
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GarchError {
    #[error("series too short: {len} observations, need at least {min}")]
    TooShort { len: usize, min: usize },
    #[error("degenerate series: variance is zero")]
    DegenerateSeries,
    #[error("series contains non-finite values")]
    NonFinite,
    #[error("conditional variance {value} is not positive at step {step}")]
    VarianceNonPositive { step: usize, value: f64 },
    #[error(
        "likelihood search did not converge after {evals} evaluations (spread {spread:e}); \
         best parameters attached"
    )]
    NonConvergence {
        best: ArmaGarchParams,
        evals: usize,
        spread: f64,
    },
}

/// Fitted ARMA(1,1)-GARCH(1,1) parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ArmaGarchParams {
    /// Mean-equation constant (daily return units).
    pub mean_const: f64,
    /// AR(1) coefficient, |·| < 1.
    pub ar: f64,
    /// MA(1) coefficient, |·| < 1.
    pub ma: f64,
    /// Variance-equation constant (squared return units), > 0.
    pub var_const: f64,
    /// ARCH coefficient, ≥ 0.
    pub arch: f64,
    /// GARCH coefficient, ≥ 0; `arch + garch < 1`.
    pub garch: f64,
    /// Gaussian log-likelihood attained at the fit.
    pub loglik: f64,
}

impl ArmaGarchParams {
    pub fn is_valid(&self) -> bool {
        math::abs(self.ar) < 1.0
            && math::abs(self.ma) < 1.0
            && self.var_const > 0.0
            && self.arch >= 0.0
            && self.garch >= 0.0
            && self.arch + self.garch < 1.0
    }

    /// Unconditional variance implied by the variance equation.
    pub fn unconditional_variance(&self) -> f64 {
        self.var_const / (1.0 - self.arch - self.garch)
    }
}

/// Recursion state after the last observed point: everything the one-step
/// forecast needs.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FilterState {
    pub last_value: f64,
    pub last_innovation: f64,
    pub last_variance: f64,
}

impl FilterState {
    /// Pre-sample state for a series with the given mean and variance.
    pub fn presample(series_mean: f64, series_variance: f64) -> Self {
        FilterState {
            last_value: series_mean,
            last_innovation: 0.0,
            last_variance: series_variance,
        }
    }

    /// Advance by one observation, returning `(innovation, variance)` at the
    /// new point.
    pub fn advance(&mut self, params: &ArmaGarchParams, x: f64) -> (f64, f64) {
        let variance = params.var_const
            + params.arch * self.last_innovation * self.last_innovation
            + params.garch * self.last_variance;
        let innovation = x
            - params.mean_const
            - params.ar * self.last_value
            - params.ma * self.last_innovation;
        self.last_value = x;
        self.last_innovation = innovation;
        self.last_variance = variance;
        (innovation, variance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    /// Innovations ε_t.
    pub innovations: Vec<f64>,
    /// Conditional volatilities σ_t.
    pub volatilities: Vec<f64>,
    /// Standardized residuals z_t = ε_t / σ_t.
    pub standardized: Vec<f64>,
    /// State after the last observation, ready for forecasting.
    pub state: FilterState,
}

/// Run the mean/variance recursions over `series`.
pub fn filter_residuals(
    params: &ArmaGarchParams,
    series: &[f64],
) -> Result<FilterOutput, GarchError> {
    let mut state = FilterState::presample(math::mean(series), math::sample_variance(series));
    let mut innovations = Vec::with_capacity(series.len());
    let mut volatilities = Vec::with_capacity(series.len());
    let mut standardized = Vec::with_capacity(series.len());
    for (t, &x) in series.iter().enumerate() {
        let (eps, variance) = state.advance(params, x);
        if !(variance > 0.0) {
            return Err(GarchError::VarianceNonPositive {
                step: t,
                value: variance,
            });
        }
        let sigma = math::sqrt(variance);
        innovations.push(eps);
        volatilities.push(sigma);
        standardized.push(eps / sigma);
    }
    Ok(FilterOutput {
        innovations,
        volatilities,
        standardized,
        state,
    })
}

/// One-step-ahead conditional `(mean, variance)`.
pub fn forecast_one_step(params: &ArmaGarchParams, state: &FilterState) -> (f64, f64) {
    let mean = params.mean_const
        + params.ar * state.last_value
        + params.ma * state.last_innovation;
    let variance = params.var_const
        + params.arch * state.last_innovation * state.last_innovation
        + params.garch * state.last_variance;
    (mean, variance)
}

/// Gaussian conditional log-likelihood of `series` under `params`.
pub fn log_likelihood(params: &ArmaGarchParams, series: &[f64]) -> f64 {
    let mut state = FilterState::presample(math::mean(series), math::sample_variance(series));
    let ln_2pi = math::ln(2.0 * math::PI);
    let mut ll = 0.0;
    for &x in series {
        let (eps, variance) = state.advance(params, x);
        ll -= 0.5 * (ln_2pi + math::ln(variance) + eps * eps / variance);
    }
    ll
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Likelihood evaluations allowed per restart.
    pub evals_per_restart: usize,
    /// Number of jittered restarts.
    pub restarts: usize,
    pub min_observations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            evals_per_restart: 500,
            restarts: 3,
            min_observations: 250,
        }
    }
}

// Transformed coordinates: [mean/sd, atanh(ar), atanh(ma), ln variance-target
// multiplier, logit(arch+garch), logit(arch share)]. Every point of R^6 maps
// to a valid parameter set, so the simplex search is unconstrained. The
// clamps keep the transforms off their floating-point saturation points
// (tanh(19) and sigmoid(37) round to exactly 1).
fn decode(u: &[f64], series_sd: f64, loglik: f64) -> ArmaGarchParams {
    let persistence = math::sigmoid(u[4].clamp(-30.0, 30.0));
    let arch_share = math::sigmoid(u[5].clamp(-30.0, 30.0));
    ArmaGarchParams {
        mean_const: u[0] * series_sd,
        ar: math::tanh(u[1].clamp(-15.0, 15.0)),
        ma: math::tanh(u[2].clamp(-15.0, 15.0)),
        var_const: math::exp(u[3].clamp(-60.0, 60.0)) * series_sd * series_sd * (1.0 - persistence),
        arch: persistence * arch_share,
        garch: persistence * (1.0 - arch_share),
        loglik,
    }
}

/// Fit by maximum likelihood: Nelder-Mead restarts from variance-targeted
/// initial values, then a compass polish. Deterministic for identical input
/// and options.
pub fn fit_arma_garch(
    series: &[f64],
    options: &FitOptions,
) -> Result<ArmaGarchParams, GarchError> {
    if series.len() < options.min_observations {
        return Err(GarchError::TooShort {
            len: series.len(),
            min: options.min_observations,
        });
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(GarchError::NonFinite);
    }
    let mean = math::mean(series);
    let sd = math::sqrt(math::sample_variance(series));
    // A constant series has variance at rounding-noise level relative to its
    // own magnitude; there is nothing to fit.
    if !(sd > 1e-12 * (1.0 + math::abs(mean))) {
        return Err(GarchError::DegenerateSeries);
    }

    let objective = |u: &[f64]| -> f64 {
        let p = decode(u, sd, 0.0);
        -log_likelihood(&p, series)
    };

    // arch = 0.05, garch = 0.90, ar = ma = 0, mean = sample mean,
    // variance constant targeted at the sample variance.
    let base = [
        mean / sd,
        0.0,
        0.0,
        0.0,
        math::logit(0.95),
        math::logit(0.05 / 0.95),
    ];

    let mut jitter = rng::derive_stream(0x6172_6D61_6761_7263, &[]);
    let mut best: Option<optim::OptimResult> = None;
    let mut any_converged = false;
    let mut total_evals = 0usize;
    for restart in 0..options.restarts.max(1) {
        let mut start = base;
        if restart > 0 {
            for s in &mut start {
                *s += 0.3 * rng::standard_normal(&mut jitter);
            }
        }
        let result = optim::nelder_mead(
            objective,
            &start,
            &NelderMeadOptions {
                max_evals: options.evals_per_restart,
                ..Default::default()
            },
        );
        total_evals += result.evals;
        any_converged |= result.converged;
        if best.as_ref().is_none_or(|b| result.value < b.value) {
            best = Some(result);
        }
    }
    let best = best.expect("at least one restart");
    let polished = optim::compass_refine(objective, &best.x, 1e-3, 1e-8, 600);
    total_evals += polished.evals;

    // The likelihood surface has two classic unidentified ridges: the ARMA
    // common-factor pair (ar ≈ ma fitting nothing) and the persistence split
    // when there is no conditional heteroskedasticity. Refit restricted
    // models and keep the simplest one whose log-likelihood is within a
    // likelihood-ratio tie band of the best; on ridge data this returns the
    // near-zero parameters instead of an arbitrary ridge point.
    let restrict = |x: &[f64], drop_arma: bool, drop_garch: bool| {
        let mut start = x.to_vec();
        if drop_arma {
            start[1] = 0.0;
            start[2] = 0.0;
        }
        if drop_garch {
            start[4] = math::logit(0.02);
        }
        optim::compass_refine(objective, &start, 1e-3, 1e-8, 600)
    };
    let plain = restrict(&polished.x, true, true);
    let no_arma = restrict(&polished.x, true, false);
    let no_garch = restrict(&polished.x, false, true);
    total_evals += plain.evals + no_arma.evals + no_garch.evals;

    const LR_TIE: f64 = 5.0;
    let candidates = [&plain, &no_arma, &no_garch, &polished];
    let best_value = candidates.iter().map(|c| c.value).fold(f64::INFINITY, f64::min);
    let chosen = candidates
        .iter()
        .find(|c| c.value <= best_value + LR_TIE)
        .expect("the minimum is in the list");

    let params = decode(&chosen.x, sd, -chosen.value);
    debug_assert!(params.is_valid());
    if !(any_converged || chosen.converged) {
        return Err(GarchError::NonConvergence {
            best: params,
            evals: total_evals,
            spread: f64::NAN,
        });
    }
    Ok(params)
}

/// Generate a path driven by the given standardized innovations, starting
/// from the model's stationary state. Returns the series and the state after
/// its last point.
pub fn simulate_path(
    params: &ArmaGarchParams,
    standardized_innovations: &[f64],
) -> (Vec<f64>, FilterState) {
    assert!(params.is_valid(), "simulate needs valid parameters");
    let mut state = FilterState {
        last_value: params.mean_const / (1.0 - params.ar),
        last_innovation: 0.0,
        last_variance: params.unconditional_variance(),
    };
    let mut series = Vec::with_capacity(standardized_innovations.len());
    for &z in standardized_innovations {
        let variance = params.var_const
            + params.arch * state.last_innovation * state.last_innovation
            + params.garch * state.last_variance;
        let eps = math::sqrt(variance) * z;
        let x = params.mean_const
            + params.ar * state.last_value
            + params.ma * state.last_innovation
            + eps;
        state.last_value = x;
        state.last_innovation = eps;
        state.last_variance = variance;
        series.push(x);
    }
    (series, state)
}

/// Gaussian-innovation simulation with a burn-in prefix discarded.
pub fn simulate_gaussian<R: rand::Rng + ?Sized>(
    params: &ArmaGarchParams,
    n: usize,
    burn_in: usize,
    rng_: &mut R,
) -> (Vec<f64>, FilterState) {
    let innovations: Vec<f64> = (0..n + burn_in)
        .map(|_| rng::standard_normal(rng_))
        .collect();
    let (mut series, state) = simulate_path(params, &innovations);
    series.drain(..burn_in);
    (series, state)
}
