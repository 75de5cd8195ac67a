//! Turnover-penalized mean-CVaR allocation.
//!
//! Maximizes `α ωᵀR − (1−α) CVaR_β(−ωᵀw) − ρ ‖ω − ω_prev‖₁` over the
//! simplex via the Rockafellar-Uryasev linearization. The weight change is
//! split into buys and sells (`ω = ω_prev + u − d`), which linearizes the L1
//! penalty and makes the no-trade solution exact: when the penalty dominates,
//! `u = d = 0` and the previous weights come back bit-identical.
//!
//! Scenario constraints are handled by constraint generation: solve over the
//! current tail set, add every scenario whose loss exceeds the optimal ζ,
//! repeat until none do. The relaxation bound makes the final solution a
//! certified global optimum of the full linear program.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{dot, l1_distance, Matrix};
use crate::risk::{self, RiskError};
use crate::simplex::{self, LinearProgram, LpError, Sense};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("malformed allocation problem: {0}")]
    BadProblem(String),
    #[error("constraint generation did not close after {rounds} rounds")]
    TailNotClosed { rounds: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

/// Weight constraint set. Long-only is the default; the box variant allows
/// limited shorting with weights in `[lower, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum WeightBounds {
    LongOnly,
    Box { lower: f64 },
}

impl WeightBounds {
    fn lower(&self) -> f64 {
        match self {
            WeightBounds::LongOnly => 0.0,
            WeightBounds::Box { lower } => *lower,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AllocationProblem<'a> {
    /// Expected next-day returns R_t (per mode: shrunk forecast or posterior mean).
    pub expected_returns: &'a [f64],
    /// q×M simulated next-day returns.
    pub scenarios: &'a Matrix,
    /// Drifted pre-rebalance holdings.
    pub prev_weights: &'a [f64],
    /// Reward weight α ∈ [0, 1] (1 = pure return, 0 = pure CVaR).
    pub risk_reward: f64,
    /// Turnover penalty ρ ≥ 0.
    pub turnover_penalty: f64,
    /// CVaR confidence level β ∈ (0, 1).
    pub cvar_level: f64,
    pub bounds: WeightBounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSolution {
    pub weights: Vec<f64>,
    /// `α ωᵀR − (1−α) CVaR − ρ ‖ω−ω_prev‖₁` as attained by the LP.
    pub objective: f64,
    pub var: f64,
    pub cvar: f64,
    pub turnover: f64,
    /// Simplex pivots across all generation rounds.
    pub iterations: usize,
    /// Constraint-generation rounds.
    pub rounds: usize,
}

fn validate(p: &AllocationProblem) -> Result<(), OptimizerError> {
    let m = p.expected_returns.len();
    if m == 0 {
        return Err(OptimizerError::BadProblem("no assets".into()));
    }
    if p.scenarios.ncols() != m || p.prev_weights.len() != m {
        return Err(OptimizerError::BadProblem(alloc::format!(
            "{} returns, {} prev weights, {} scenario columns",
            m,
            p.prev_weights.len(),
            p.scenarios.ncols()
        )));
    }
    if p.scenarios.nrows() == 0 {
        return Err(OptimizerError::BadProblem("no scenarios".into()));
    }
    if !(0.0..=1.0).contains(&p.risk_reward) {
        return Err(OptimizerError::BadProblem(alloc::format!(
            "risk-reward weight {} outside [0,1]",
            p.risk_reward
        )));
    }
    if !(p.turnover_penalty >= 0.0) {
        return Err(OptimizerError::BadProblem("negative turnover penalty".into()));
    }
    if !(0.0 < p.cvar_level && p.cvar_level < 1.0) {
        return Err(OptimizerError::BadProblem(alloc::format!(
            "CVaR level {} outside (0,1)",
            p.cvar_level
        )));
    }
    let lower = p.bounds.lower();
    let sum: f64 = p.prev_weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || p.prev_weights.iter().any(|&w| w < lower - 1e-9) {
        return Err(OptimizerError::BadProblem(alloc::format!(
            "previous weights infeasible (sum {sum})"
        )));
    }
    Ok(())
}

/// The allocation LP over a scenario subset. Columns are
/// `u_0..u_{m-1}, d_0..d_{m-1}, e_(tail), ζ⁺, ζ⁻`.
struct ReducedLp {
    objective: Vec<f64>,
    rows: Vec<(Vec<f64>, Sense, f64)>,
    m: usize,
    zeta_pos: usize,
}

impl ReducedLp {
    fn build(p: &AllocationProblem, tail: &[usize], prev_losses: &[f64]) -> Self {
        let m = p.expected_returns.len();
        let q_full = p.scenarios.nrows() as f64;
        let alpha = p.risk_reward;
        let rho = p.turnover_penalty;
        let excess_cost = (1.0 - alpha) / (q_full * (1.0 - p.cvar_level));
        let lower = p.bounds.lower();
        let boxed = !matches!(p.bounds, WeightBounds::LongOnly);

        let n = 2 * m + tail.len() + 2;
        let zeta_pos = 2 * m + tail.len();
        let zeta_neg = zeta_pos + 1;

        let mut objective = vec![0.0; n];
        for i in 0..m {
            objective[i] = -alpha * p.expected_returns[i] + rho;
            objective[m + i] = alpha * p.expected_returns[i] + rho;
        }
        for t in 0..tail.len() {
            objective[2 * m + t] = excess_cost;
        }
        objective[zeta_pos] = 1.0 - alpha;
        objective[zeta_neg] = -(1.0 - alpha);

        let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::with_capacity(1 + m + tail.len());

        // Budget: Σu − Σd = 0. The previous weights already sum to 1 within
        // validation tolerance; demanding zero net trade (rather than
        // re-normalizing away their rounding dust) is what lets a dominant
        // penalty return them bit-exactly.
        let mut budget = vec![0.0; n];
        for i in 0..m {
            budget[i] = 1.0;
            budget[m + i] = -1.0;
        }
        rows.push((budget, Sense::Eq, 0.0));

        // Lower bounds: u_i − d_i ≥ lower − prev_i.
        for i in 0..m {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            row[m + i] = -1.0;
            rows.push((row, Sense::Ge, lower - p.prev_weights[i]));
        }
        // Upper bounds only needed when shorting is allowed.
        if boxed {
            for i in 0..m {
                let mut row = vec![0.0; n];
                row[i] = 1.0;
                row[m + i] = -1.0;
                rows.push((row, Sense::Le, 1.0 - p.prev_weights[i]));
            }
        }

        // Tail rows: w_jᵀ(u−d) + ζ + e_j ≥ loss_j(prev).
        for (t, &j) in tail.iter().enumerate() {
            let w = p.scenarios.row(j);
            let mut row = vec![0.0; n];
            for i in 0..m {
                row[i] = w[i];
                row[m + i] = -w[i];
            }
            row[2 * m + t] = 1.0;
            row[zeta_pos] = 1.0;
            row[zeta_neg] = -1.0;
            rows.push((row, Sense::Ge, prev_losses[j]));
        }

        ReducedLp {
            objective,
            rows,
            m,
            zeta_pos,
        }
    }

    fn unpack(&self, p: &AllocationProblem, x: &[f64]) -> (Vec<f64>, f64) {
        let weights = (0..self.m)
            .map(|i| p.prev_weights[i] + x[i] - x[self.m + i])
            .collect();
        (weights, x[self.zeta_pos] - x[self.zeta_pos + 1])
    }

    /// Solve for the primary objective. Returns `(weights, ζ, no_trade,
    /// lp_value, pivots)`.
    fn solve_primary(
        &self,
        p: &AllocationProblem,
    ) -> Result<(Vec<f64>, f64, bool, f64, usize), OptimizerError> {
        let solution = simplex::solve(&LinearProgram {
            objective: self.objective.clone(),
            rows: self.rows.clone(),
        })?;
        let no_trade = (0..2 * self.m).all(|i| solution.x[i] == 0.0);
        let (weights, zeta) = self.unpack(p, &solution.x);
        Ok((weights, zeta, no_trade, solution.objective, solution.iterations))
    }

    /// Re-solve with the primary objective pinned at its optimum and a
    /// lexicographic secondary objective (minimize Σ i·ω_i), so ties among
    /// optimal vertices resolve toward the lowest asset indices.
    fn solve_lexicographic(
        &self,
        p: &AllocationProblem,
        primary_value: f64,
    ) -> Result<(Vec<f64>, f64, usize), OptimizerError> {
        let n = self.objective.len();
        let mut lex = vec![0.0; n];
        for i in 0..self.m {
            lex[i] = i as f64;
            lex[self.m + i] = -(i as f64);
        }
        let mut rows = self.rows.clone();
        let slack = 1e-12 * (1.0 + crate::math::abs(primary_value));
        rows.push((self.objective.clone(), Sense::Le, primary_value + slack));
        let solution = simplex::solve(&LinearProgram {
            objective: lex,
            rows,
        })?;
        let (weights, zeta) = self.unpack(p, &solution.x);
        Ok((weights, zeta, solution.iterations))
    }
}

/// Solve the allocation problem to a certified global optimum.
pub fn solve(p: &AllocationProblem) -> Result<AllocationSolution, OptimizerError> {
    validate(p)?;
    let q = p.scenarios.nrows();
    let m = p.expected_returns.len();
    let alpha = p.risk_reward;
    let beta = p.cvar_level;
    let prev_losses = risk::portfolio_losses(p.scenarios, p.prev_weights)?;

    // With α = 1 the CVaR term has zero weight; no scenario rows are needed.
    let pure_return = (1.0 - alpha) == 0.0;

    let mut tail: Vec<usize> = if pure_return {
        Vec::new()
    } else {
        // Seed with the worst losses under the previous weights.
        let tail_size = crate::math::ceil((1.0 - beta) * q as f64) as usize;
        let seed_size = (2 * tail_size + 2 * m + 10).min(q);
        let mut order: Vec<usize> = (0..q).collect();
        order.sort_by(|&a, &b| {
            prev_losses[b]
                .partial_cmp(&prev_losses[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut seed: Vec<usize> = order[..seed_size].to_vec();
        seed.sort_unstable();
        seed
    };

    let mut iterations = 0usize;
    let mut rounds = 0usize;
    let max_rounds = 60;
    let mut in_tail = vec![false; q];
    for &j in &tail {
        in_tail[j] = true;
    }

    loop {
        rounds += 1;
        if rounds > max_rounds {
            return Err(OptimizerError::TailNotClosed { rounds });
        }
        let lp = ReducedLp::build(p, &tail, &prev_losses);
        let (weights1, zeta1, no_trade, lp_value, pivots) = lp.solve_primary(p)?;
        iterations += pivots;

        let violations = |weights: &[f64], zeta: f64| -> Result<Vec<usize>, OptimizerError> {
            let losses = risk::portfolio_losses(p.scenarios, weights)?;
            if pure_return {
                return Ok(Vec::new());
            }
            let tol = 1e-10 * (1.0 + crate::math::abs(zeta));
            Ok(losses
                .iter()
                .enumerate()
                .filter(|&(j, &loss)| !in_tail[j] && loss > zeta + tol)
                .map(|(j, _)| j)
                .collect())
        };

        let violated1 = violations(&weights1, zeta1)?;
        if violated1.is_empty() {
            // The no-trade vertex is returned verbatim so a dominant penalty
            // freezes the weights bit-exactly; otherwise resolve objective
            // ties toward the lowest indices.
            let (weights, zeta) = if no_trade {
                (weights1, zeta1)
            } else {
                let (weights2, zeta2, pivots2) = lp.solve_lexicographic(p, lp_value)?;
                iterations += pivots2;
                let violated2 = violations(&weights2, zeta2)?;
                if !violated2.is_empty() {
                    for j in violated2 {
                        in_tail[j] = true;
                        tail.push(j);
                    }
                    tail.sort_unstable();
                    continue;
                }
                (weights2, zeta2)
            };

            let losses = risk::portfolio_losses(p.scenarios, &weights)?;
            let (cvar, var) = risk::cvar_from_objective(&losses, beta)?;
            let turnover = l1_distance(&weights, p.prev_weights);
            let excess_mean = if pure_return {
                0.0
            } else {
                losses.iter().map(|&l| (l - zeta).max(0.0)).sum::<f64>()
                    / (q as f64 * (1.0 - beta))
            };
            let objective = alpha * dot(&weights, p.expected_returns)
                - (1.0 - alpha) * (zeta + excess_mean)
                - p.turnover_penalty * turnover;
            return Ok(AllocationSolution {
                weights,
                objective,
                var,
                cvar,
                turnover,
                iterations,
                rounds,
            });
        }
        for j in violated1 {
            in_tail[j] = true;
            tail.push(j);
        }
        tail.sort_unstable();
    }
}

/// Solve the same problem across a grid of reward weights α with shared
/// scenarios.
pub fn pareto_sweep(
    base: &AllocationProblem,
    alphas: &[f64],
) -> Result<Vec<AllocationSolution>, OptimizerError> {
    alphas
        .iter()
        .map(|&alpha| {
            let p = AllocationProblem {
                risk_reward: alpha,
                ..base.clone()
            };
            solve(&p)
        })
        .collect()
}
