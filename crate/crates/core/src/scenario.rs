//! Correlated next-day return scenarios.
//!
//! Construction: draw a q×M matrix of independent standardized NIG variates
//! (one named stream per asset), mix rows through the transpose of the
//! Cholesky factor of the residual correlation matrix, then apply the
//! per-asset one-step volatility and add the shrunk mean. Each scenario row
//! is the affine image `A y + m` with `A = diag(σ) L`, which is the contract
//! the tests pin down.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{LinalgError, Matrix};
use crate::nig::{self, NigParams};
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("residual panel needs at least 2 rows, found {0}")]
    TooFewRows(usize),
    #[error("correlation matrix not positive definite even after jitter {max_jitter:e}")]
    NotPositiveDefinite { max_jitter: f64 },
    #[error("marginal {asset} is invalid or not standardized")]
    BadMarginal { asset: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Nig(#[from] nig::NigError),
}

/// Residual correlation matrix, conditioned to positive definiteness.
///
/// `jitter` is zero when the raw matrix factorized cleanly; otherwise it is
/// the ridge that had to be blended in (the matrix stored here is the
/// conditioned one).
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualCorrelation {
    pub matrix: Matrix,
    pub jitter: f64,
}

/// Sample correlation of the standardized-residual panel columns, with
/// escalating diagonal jitter (1e-10 ×10 up to 1e-6) when near-collinear
/// windows produce a numerically singular matrix.
pub fn residual_correlation(z_panel: &Matrix) -> Result<ResidualCorrelation, ScenarioError> {
    if z_panel.nrows() < 2 {
        return Err(ScenarioError::TooFewRows(z_panel.nrows()));
    }
    let cov = crate::linalg::sample_covariance(z_panel);
    let corr = crate::linalg::correlation_from_covariance(&cov);
    condition_correlation(corr)
}

/// Blend `(C + jI)/(1 + j)` with escalating `j` until Cholesky succeeds.
pub fn condition_correlation(corr: Matrix) -> Result<ResidualCorrelation, ScenarioError> {
    if corr.cholesky().is_ok() {
        return Ok(ResidualCorrelation {
            matrix: corr,
            jitter: 0.0,
        });
    }
    let m = corr.nrows();
    let mut jitter = 1e-10;
    while jitter <= 1e-6 {
        let mut conditioned = corr.scale(1.0 / (1.0 + jitter));
        for i in 0..m {
            conditioned[(i, i)] = 1.0;
        }
        if conditioned.cholesky().is_ok() {
            return Ok(ResidualCorrelation {
                matrix: conditioned,
                jitter,
            });
        }
        jitter *= 10.0;
    }
    Err(ScenarioError::NotPositiveDefinite { max_jitter: 1e-6 })
}

/// Per-asset scenario marginal: standardized NIG shape plus the one-step
/// volatility that restores the asset's scale after mixing.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioMarginal {
    pub nig: NigParams,
    pub sigma: f64,
}

/// q simulated next-day return vectors with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    /// q×M simulated returns.
    pub scenarios: Matrix,
    /// Shrunk mean vector m.
    pub mean: Vec<f64>,
    /// Lower-triangular mixing factor L.
    pub mixing_factor: Matrix,
    pub marginals: Vec<ScenarioMarginal>,
    pub seed: u64,
}

/// Independent standardized NIG draws, q×M, one derived stream per asset
/// column so the set is invariant to evaluation order.
pub fn standardized_draws(
    marginals: &[NigParams],
    q: usize,
    seed: u64,
) -> Result<Matrix, ScenarioError> {
    let m = marginals.len();
    let mut draws = Matrix::zeros(q, m);
    for (asset, params) in marginals.iter().enumerate() {
        if !params.is_valid() || !params.is_standardized(1e-9) {
            return Err(ScenarioError::BadMarginal { asset });
        }
        let mut stream = rng::derive_stream(seed, &[0x6472_6177, asset as u64]);
        for j in 0..q {
            draws[(j, asset)] = nig::sample_one(params, &mut stream);
        }
    }
    Ok(draws)
}

/// Mix independent draws through `Lᵀ`: row_j ← L · y_j.
pub fn mix_draws(draws: &Matrix, chol: &Matrix) -> Result<Matrix, ScenarioError> {
    let m = chol.nrows();
    if draws.ncols() != m {
        return Err(ScenarioError::Shape(alloc::format!(
            "draws have {} columns, factor is {m}×{m}",
            draws.ncols()
        )));
    }
    let q = draws.nrows();
    let mut mixed = Matrix::zeros(q, m);
    for j in 0..q {
        let y = draws.row(j);
        let out = mixed.row_mut(j);
        for i in 0..m {
            let mut s = 0.0;
            for k in 0..=i {
                s += chol[(i, k)] * y[k];
            }
            out[i] = s;
        }
    }
    Ok(mixed)
}

/// Apply per-asset scale and mean: `w_j = m + σ ∘ z_j` per row.
pub fn compose_scenarios(mixed: &Matrix, sigmas: &[f64], mean: &[f64]) -> Matrix {
    let q = mixed.nrows();
    let m = mixed.ncols();
    debug_assert_eq!(sigmas.len(), m);
    debug_assert_eq!(mean.len(), m);
    let mut out = Matrix::zeros(q, m);
    for j in 0..q {
        let z = mixed.row(j);
        let row = out.row_mut(j);
        for i in 0..m {
            row[i] = mean[i] + sigmas[i] * z[i];
        }
    }
    out
}

/// Full scenario build: draw, mix, scale, shift. Deterministic for a fixed
/// seed; the correlation matrix must already be conditioned (see
/// [`residual_correlation`]).
pub fn build_scenarios(
    marginals: &[ScenarioMarginal],
    mean: &[f64],
    correlation: &Matrix,
    q: usize,
    seed: u64,
) -> Result<ScenarioSet, ScenarioError> {
    let m = marginals.len();
    if correlation.nrows() != m || correlation.ncols() != m || mean.len() != m {
        return Err(ScenarioError::Shape(alloc::format!(
            "{} marginals, {} means, {}×{} correlation",
            m,
            mean.len(),
            correlation.nrows(),
            correlation.ncols()
        )));
    }
    let chol = correlation.cholesky()?;
    let shapes: Vec<NigParams> = marginals.iter().map(|mg| mg.nig).collect();
    let draws = standardized_draws(&shapes, q, seed)?;
    let mixed = mix_draws(&draws, &chol)?;
    let sigmas: Vec<f64> = marginals.iter().map(|mg| mg.sigma).collect();
    let scenarios = compose_scenarios(&mixed, &sigmas, mean);
    Ok(ScenarioSet {
        scenarios,
        mean: mean.to_vec(),
        mixing_factor: chol,
        marginals: marginals.to_vec(),
        seed,
    })
}
