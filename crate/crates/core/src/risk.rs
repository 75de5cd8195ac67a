//! Empirical value-at-risk and conditional value-at-risk over scenario
//! losses, and the discrete Rockafellar-Uryasev objective.
//!
//! Conventions: loss is the negated portfolio return, `loss_j = -ωᵀw_j`;
//! the empirical VaR at level β is the ⌈βq⌉-th smallest loss (lower
//! quantile, minimum over ties), which places the RU minimizer on a sample
//! point and keeps the tests exact.

use alloc::vec::Vec;

use thiserror::Error;

use crate::math;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("loss sample is empty")]
    Empty,
    #[error("confidence level {0} outside (0, 1)")]
    BadLevel(f64),
    #[error("weights ({weights}) and scenario columns ({assets}) differ")]
    LengthMismatch { weights: usize, assets: usize },
}

fn rank_index(q: usize, beta: f64) -> usize {
    (math::ceil(beta * q as f64) as usize).clamp(1, q) - 1
}

/// The ⌈βq⌉-th smallest loss.
pub fn empirical_var(losses: &[f64], beta: f64) -> Result<f64, RiskError> {
    if losses.is_empty() {
        return Err(RiskError::Empty);
    }
    if !(0.0 < beta && beta < 1.0) {
        return Err(RiskError::BadLevel(beta));
    }
    let k = rank_index(losses.len(), beta);
    let mut work = losses.to_vec();
    let (_, kth, _) = work.select_nth_unstable_by(k, |a, b| a.partial_cmp(b).unwrap());
    Ok(*kth)
}

/// Minimum of the discrete Rockafellar-Uryasev objective
/// `F_β(ζ) = ζ + (1/(q(1-β))) Σ_j [loss_j − ζ]⁺` over ζ.
///
/// The minimum over all of ℝ is attained at the ⌈βq⌉-th smallest loss (the
/// lower empirical quantile): the piecewise-linear objective has negative
/// slope strictly below it and non-negative slope from it on. Returns
/// `(CVaR, ζ*)` with ζ* that smallest minimizing sample point; the scan
/// equivalence is pinned by tests.
pub fn cvar_from_objective(losses: &[f64], beta: f64) -> Result<(f64, f64), RiskError> {
    if losses.is_empty() {
        return Err(RiskError::Empty);
    }
    if !(0.0 < beta && beta < 1.0) {
        return Err(RiskError::BadLevel(beta));
    }
    let q = losses.len();
    let k = rank_index(q, beta);
    let mut work = losses.to_vec();
    let (_, kth, above) = work.select_nth_unstable_by(k, |a, b| a.partial_cmp(b).unwrap());
    let zeta = *kth;
    let excess: f64 = above.iter().map(|l| (l - zeta).max(0.0)).sum();
    let cvar = zeta + excess / (q as f64 * (1.0 - beta));
    Ok((cvar, zeta))
}

/// Scenario losses induced by a weight vector: `loss_j = -ωᵀ row_j`.
pub fn portfolio_losses(
    scenario_rows: &crate::linalg::Matrix,
    weights: &[f64],
) -> Result<Vec<f64>, RiskError> {
    if scenario_rows.ncols() != weights.len() {
        return Err(RiskError::LengthMismatch {
            weights: weights.len(),
            assets: scenario_rows.ncols(),
        });
    }
    Ok((0..scenario_rows.nrows())
        .map(|j| -crate::linalg::dot(scenario_rows.row(j), weights))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::rng;
    use alloc::vec;
    use alloc::vec::Vec;

    fn one_to_hundred() -> Vec<f64> {
        (1..=100).map(|i| i as f64).collect()
    }

    #[test]
    fn var_is_order_statistic() {
        assert_eq!(empirical_var(&one_to_hundred(), 0.95).unwrap(), 95.0);
        assert_eq!(empirical_var(&[3.0, 3.0, 3.0], 0.9).unwrap(), 3.0);
    }

    #[test]
    fn var_monte_carlo_against_known_quantile() {
        let mut r = rng::derive_stream(51, &[]);
        let losses: Vec<f64> = (0..1_000_000).map(|_| rng::standard_normal(&mut r)).collect();
        let var = empirical_var(&losses, 0.95).unwrap();
        assert!((var - 1.6449).abs() < 0.01, "var = {var}");
    }

    #[test]
    fn cvar_hand_computed_objective() {
        // ζ* = 95: 95 + (1+2+3+4+5)/(100·0.05) = 98.
        let (cvar, zeta) = cvar_from_objective(&one_to_hundred(), 0.95).unwrap();
        assert_eq!(zeta, 95.0);
        assert!((cvar - 98.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_sample() {
        let losses = vec![4.2; 17];
        let (cvar, zeta) = cvar_from_objective(&losses, 0.95).unwrap();
        assert_eq!(cvar, 4.2);
        assert_eq!(zeta, 4.2);
    }

    #[test]
    fn cvar_dominates_var_and_matches_scan_minimum() {
        let mut r = rng::derive_stream(52, &[]);
        for trial in 0..1000 {
            let n = 50 + (trial % 200);
            let losses: Vec<f64> = (0..n).map(|_| rng::standard_normal(&mut r) * 2.0).collect();
            let beta = 0.9;
            let var = empirical_var(&losses, beta).unwrap();
            let (cvar, zeta) = cvar_from_objective(&losses, beta).unwrap();
            assert!(cvar >= var - 1e-12);
            assert_eq!(zeta, var, "RU minimizer sits on the lower quantile");

            // Scan oracle: evaluate F at every sample point directly.
            let q = losses.len() as f64;
            let scale = 1.0 / (q * (1.0 - beta));
            let f_at = |z: f64| {
                z + scale * losses.iter().map(|&l| (l - z).max(0.0)).sum::<f64>()
            };
            for &candidate in &losses {
                assert!(
                    cvar <= f_at(candidate) + 1e-10,
                    "F({candidate}) beats the reported minimum"
                );
            }
            assert!((cvar - f_at(zeta)).abs() < 1e-10);

            // Identity with the blended tail-average form.
            let above: f64 = losses.iter().filter(|&&l| l > zeta).sum();
            let n_above = losses.iter().filter(|&&l| l > zeta).count() as f64;
            let blended =
                (above + (q * (1.0 - beta) - n_above) * zeta) / (q * (1.0 - beta));
            assert!(
                (cvar - blended).abs() < 1e-9,
                "cvar {cvar} vs blended {blended}"
            );
        }
    }

    #[test]
    fn positive_homogeneity_and_translation() {
        let mut r = rng::derive_stream(53, &[]);
        let losses: Vec<f64> = (0..333).map(|_| rng::standard_normal(&mut r)).collect();
        let (cvar, var) = cvar_from_objective(&losses, 0.95).unwrap();

        let scaled: Vec<f64> = losses.iter().map(|l| 2.5 * l).collect();
        let (cvar_s, var_s) = cvar_from_objective(&scaled, 0.95).unwrap();
        assert!((cvar_s - 2.5 * cvar).abs() < 1e-12);
        assert!((var_s - 2.5 * var).abs() < 1e-12);

        let shifted: Vec<f64> = losses.iter().map(|l| l + 0.7).collect();
        let (cvar_t, var_t) = cvar_from_objective(&shifted, 0.95).unwrap();
        assert!((cvar_t - (cvar + 0.7)).abs() < 1e-12);
        assert!((var_t - (var + 0.7)).abs() < 1e-12);
    }

    #[test]
    fn subadditivity_spot_check() {
        let mut r = rng::derive_stream(54, &[]);
        for _ in 0..100 {
            let a: Vec<f64> = (0..200).map(|_| rng::standard_normal(&mut r)).collect();
            let b: Vec<f64> = (0..200)
                .map(|i| 0.5 * a[i] + rng::standard_normal(&mut r))
                .collect();
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let (ca, _) = cvar_from_objective(&a, 0.9).unwrap();
            let (cb, _) = cvar_from_objective(&b, 0.9).unwrap();
            let (cs, _) = cvar_from_objective(&sum, 0.9).unwrap();
            assert!(cs <= ca + cb + 1e-12);
        }
    }

    #[test]
    fn losses_are_negated_returns() {
        let scenarios = Matrix::from_rows(&[vec![0.01], vec![-0.02]]);
        let losses = portfolio_losses(&scenarios, &[1.0]).unwrap();
        assert_eq!(losses, vec![-0.01, 0.02]);

        let two = Matrix::from_rows(&[vec![0.03, -0.03]]);
        let l = portfolio_losses(&two, &[0.5, 0.5]).unwrap();
        assert_eq!(l, vec![0.0]);

        assert!(portfolio_losses(&two, &[1.0]).is_err());
    }

    #[test]
    fn losses_match_independent_dot_products() {
        let mut r = rng::derive_stream(55, &[]);
        let rows: Vec<Vec<f64>> = (0..64)
            .map(|_| (0..3).map(|_| rng::standard_normal(&mut r) * 0.01).collect())
            .collect();
        let scenarios = Matrix::from_rows(&rows);
        let w = [0.2, 0.5, 0.3];
        let losses = portfolio_losses(&scenarios, &w).unwrap();
        for (j, row) in rows.iter().enumerate() {
            let direct = -(row[0] * w[0] + row[1] * w[1] + row[2] * w[2]);
            assert!((losses[j] - direct).abs() < 1e-15);
        }
    }
}
