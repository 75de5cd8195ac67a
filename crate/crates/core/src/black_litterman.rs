//! Black-Litterman posterior expected returns.
//!
//! Equilibrium weights blend the renormalized index composition with
//! sum-normalized ESG scores; the equilibrium premium is `Π = δ Σ ω_eq`; the
//! posterior with K views is
//! `μ = [(τΣ)⁻¹ + Pᵀ Ω⁻¹ P]⁻¹ [(τΣ)⁻¹ Π + Pᵀ Ω⁻¹ v]` with covariance the
//! leading inverse. Ω enters inverted: small view variance means high
//! confidence. With no views the posterior collapses to `(Π, τΣ)` exactly,
//! with no linear algebra performed.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{LinalgError, Matrix};
use crate::market::{benchmark_weights, Date, EsgTable, MarketError, ReturnPanel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlError {
    #[error("asset `{0}` has no ESG score at the decision date; it should have been excluded upstream")]
    MissingScore(String),
    #[error("ESG scores sum to zero over the universe; equilibrium blend undefined")]
    ZeroScoreSum,
    #[error("lambda {0} outside [0, 1]")]
    BadLambda(f64),
    #[error("views are malformed: {0}")]
    BadViews(String),
    #[error("posterior system is singular: {0}")]
    Singular(#[from] LinalgError),
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// Investor views: a K×M pick matrix, K view returns, and the diagonal of
/// the view-uncertainty matrix (variance units, strictly positive). K = 0
/// expresses no views.
#[derive(Debug, Clone, PartialEq)]
pub struct BlViews {
    pub picks: Matrix,
    pub values: Vec<f64>,
    pub uncertainties: Vec<f64>,
}

impl BlViews {
    pub fn none(n_assets: usize) -> Self {
        BlViews {
            picks: Matrix::zeros(0, n_assets),
            values: Vec::new(),
            uncertainties: Vec::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self, n_assets: usize) -> Result<(), BlError> {
        if self.picks.ncols() != n_assets && self.k() > 0 {
            return Err(BlError::BadViews(alloc::format!(
                "pick matrix has {} columns for {n_assets} assets",
                self.picks.ncols()
            )));
        }
        if self.picks.nrows() != self.k() || self.uncertainties.len() != self.k() {
            return Err(BlError::BadViews(alloc::format!(
                "{} pick rows, {} values, {} uncertainties",
                self.picks.nrows(),
                self.k(),
                self.uncertainties.len()
            )));
        }
        for k in 0..self.k() {
            if self.picks.row(k).iter().all(|&x| x == 0.0) {
                return Err(BlError::BadViews(alloc::format!("view {k} picks nothing")));
            }
            if !(self.uncertainties[k] > 0.0) {
                return Err(BlError::BadViews(alloc::format!(
                    "view {k} has non-positive uncertainty"
                )));
            }
        }
        Ok(())
    }
}

/// Posterior mean and covariance of the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct BlPosterior {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
}

/// `ω_eq = (1-λ) ω_C + λ ω_ξ` over the universe, where ω_C renormalizes the
/// index weights and ω_ξ sum-normalizes the raw ESG scores at `date`.
pub fn equilibrium_weights(
    esg: &EsgTable,
    panel: &ReturnPanel,
    universe: &[usize],
    date: Date,
    lambda: f64,
) -> Result<Vec<f64>, BlError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(BlError::BadLambda(lambda));
    }
    let index_part = benchmark_weights(esg, panel, universe)?;
    let mut scores = Vec::with_capacity(universe.len());
    for &col in universe {
        let ticker = &panel.tickers()[col];
        let s = esg
            .score_at(date, ticker)
            .ok_or_else(|| BlError::MissingScore(ticker.clone()))?;
        scores.push(s);
    }
    blend_weights(&index_part, &scores, lambda)
}

/// Blend taking the already-renormalized index part and raw scores directly.
pub fn blend_weights(
    index_part: &[f64],
    raw_scores: &[f64],
    lambda: f64,
) -> Result<Vec<f64>, BlError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(BlError::BadLambda(lambda));
    }
    let total: f64 = raw_scores.iter().sum();
    if lambda > 0.0 && !(total > 0.0) {
        return Err(BlError::ZeroScoreSum);
    }
    Ok(index_part
        .iter()
        .zip(raw_scores)
        .map(|(c, s)| {
            let esg_part = if lambda > 0.0 { s / total } else { 0.0 };
            (1.0 - lambda) * c + lambda * esg_part
        })
        .collect())
}

/// Equilibrium risk premium `Π = δ Σ ω_eq`.
pub fn equilibrium_premium(risk_aversion: f64, covariance: &Matrix, weights: &[f64]) -> Vec<f64> {
    debug_assert!(risk_aversion >= 0.0);
    covariance
        .matvec(weights)
        .into_iter()
        .map(|x| risk_aversion * x)
        .collect()
}

/// Posterior mean and covariance-of-mean.
pub fn posterior(
    tau: f64,
    covariance: &Matrix,
    premium: &[f64],
    views: &BlViews,
) -> Result<BlPosterior, BlError> {
    assert!(tau > 0.0, "tau must be positive");
    let n = premium.len();
    views.validate(n)?;
    if views.k() == 0 {
        // Exact collapse, no solves.
        return Ok(BlPosterior {
            mean: premium.to_vec(),
            covariance: covariance.scale(tau),
        });
    }
    let tau_sigma = covariance.scale(tau);
    let tau_sigma_inv = tau_sigma.inverse_spd()?;

    // A = (τΣ)⁻¹ + Pᵀ Ω⁻¹ P,  rhs = (τΣ)⁻¹ Π + Pᵀ Ω⁻¹ v.
    let mut a = tau_sigma_inv.clone();
    let mut rhs = tau_sigma_inv.matvec(premium);
    for k in 0..views.k() {
        let row = views.picks.row(k);
        let inv_omega = 1.0 / views.uncertainties[k];
        for i in 0..n {
            rhs[i] += row[i] * inv_omega * views.values[k];
            for j in 0..n {
                a[(i, j)] += row[i] * inv_omega * row[j];
            }
        }
    }
    let mean = a.solve_spd(&rhs)?;
    let covariance = a.inverse_spd()?;
    Ok(BlPosterior { mean, covariance })
}
