//! ESG shrinkage of expected returns.
//!
//! Raw provider scores (roughly 0-100) cannot be blended with daily returns
//! directly, so scores are first normalized into return units with an
//! explicit conversion scale `kappa`; the shrunk mean is then the convex
//! blend `m = (1-λ) μ + λ ξ`.

use alloc::vec::Vec;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Normalization {
    /// `ξ_i = κ (s_i − min) / (max − min)`; identical scores map to `κ/2`.
    MinMax,
    /// `ξ_i = κ (s_i − mean) / std` (population std); zero spread maps to 0.
    ZScore,
}

/// How the blend enters the pipeline: as a mean-level operation, or applied
/// to every observation of the fitting window (which also scales the
/// covariance by `(1-λ)²`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ShrinkMode {
    Mean,
    Observations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShrinkageSpec {
    /// Shrinkage weight λ ∈ [0, 1].
    pub lambda: f64,
    /// ESG-to-return conversion scale (daily return units per normalized
    /// score unit), ≥ 0.
    pub kappa: f64,
    pub normalization: Normalization,
}

impl ShrinkageSpec {
    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.lambda) && self.kappa >= 0.0
    }
}

/// Normalize raw ESG scores of the active universe into return units.
pub fn normalize_scores(raw: &[f64], spec: &ShrinkageSpec) -> Vec<f64> {
    debug_assert!(spec.is_valid());
    debug_assert!(raw.iter().all(|s| *s >= 0.0));
    match spec.normalization {
        Normalization::MinMax => {
            let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
            let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max > min {
                raw.iter()
                    .map(|s| spec.kappa * (s - min) / (max - min))
                    .collect()
            } else {
                // Documented convention for a flat score vector.
                raw.iter().map(|_| spec.kappa * 0.5).collect()
            }
        }
        Normalization::ZScore => {
            let std = math::sqrt(math::population_variance(raw));
            if std > 0.0 {
                let mean = math::mean(raw);
                raw.iter()
                    .map(|s| spec.kappa * (s - mean) / std)
                    .collect()
            } else {
                raw.iter().map(|_| 0.0).collect()
            }
        }
    }
}

/// Stein-style blend of a forecast mean toward the ESG bias:
/// `m_i = (1-λ) μ_i + λ ξ_i`.
pub fn shrink_mean(mu: &[f64], xi: &[f64], lambda: f64) -> Vec<f64> {
    assert_eq!(mu.len(), xi.len(), "mean and bias must have equal length");
    debug_assert!((0.0..=1.0).contains(&lambda));
    mu.iter()
        .zip(xi)
        .map(|(m, x)| (1.0 - lambda) * m + lambda * x)
        .collect()
}

/// Default conversion scale: cross-sectional (population) standard deviation
/// of the window's per-asset sample mean returns. Puts the bias on the same
/// scale as the quantity it shrinks.
pub fn auto_kappa(window_mean_returns: &[f64]) -> f64 {
    math::sqrt(math::population_variance(window_mean_returns))
}
