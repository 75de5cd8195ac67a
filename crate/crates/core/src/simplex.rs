//! Dense two-phase primal simplex for small linear programs.
//!
//! Sized for the allocation problems this engine produces (at most a few
//! thousand rows after constraint generation). Determinism is part of the
//! contract: entering column is the most negative reduced cost with ties to
//! the lowest index, leaving row is the tightest ratio with ties to the
//! lowest row; after a long degenerate streak pricing falls back to Bland's
//! rule until the objective moves again, which prevents cycling.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// `minimize c·x  s.t.  rows, x ≥ 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Sense, f64)>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("infeasible: phase-1 residual {residual}")]
    Infeasible { residual: f64 },
    #[error("objective is unbounded below")]
    Unbounded,
    #[error("iteration limit {limit} exceeded (best objective {best})")]
    IterationLimit { limit: usize, best: f64 },
}

const EPS_COST: f64 = 1e-9;
const EPS_PIVOT: f64 = 1e-10;
const EPS_FEAS: f64 = 1e-7;
const DEGENERATE_STREAK: usize = 64;

struct Tableau {
    /// Constraint coefficients, m rows by `ncols`, then rhs kept separately.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    basis: Vec<usize>,
    n_struct: usize,
    art_start: usize,
    ncols: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize, cost: &mut [f64], cost_rhs: &mut f64) {
        let p = self.a[row][col];
        for v in self.a[row].iter_mut() {
            *v /= p;
        }
        self.b[row] /= p;
        for i in 0..self.a.len() {
            if i == row {
                continue;
            }
            let f = self.a[i][col];
            if f != 0.0 {
                for j in 0..self.ncols {
                    self.a[i][j] -= f * self.a[row][j];
                }
                self.a[i][col] = 0.0;
                self.b[i] -= f * self.b[row];
            }
        }
        let f = cost[col];
        if f != 0.0 {
            for j in 0..self.ncols {
                cost[j] -= f * self.a[row][j];
            }
            cost[col] = 0.0;
            *cost_rhs -= f * self.b[row];
        }
        self.basis[row] = col;
    }

    /// Price out the current basis from a fresh cost vector.
    fn reduce_costs(&self, raw_cost: &[f64]) -> (Vec<f64>, f64) {
        let mut cost = raw_cost.to_vec();
        let mut rhs = 0.0;
        for (row, &bcol) in self.basis.iter().enumerate() {
            let cb = cost[bcol];
            if cb != 0.0 {
                for j in 0..self.ncols {
                    cost[j] -= cb * self.a[row][j];
                }
                cost[bcol] = 0.0;
                rhs -= cb * self.b[row];
            }
        }
        (cost, rhs)
    }

    /// Run simplex iterations on the given cost row. `allowed` bounds the
    /// columns that may enter (artificials are banned in phase 2).
    fn iterate(
        &mut self,
        cost: &mut [f64],
        cost_rhs: &mut f64,
        allowed: usize,
        limit: usize,
        iterations: &mut usize,
    ) -> Result<(), LpError> {
        let mut degenerate = 0usize;
        loop {
            if *iterations >= limit {
                return Err(LpError::IterationLimit {
                    limit,
                    best: -*cost_rhs,
                });
            }
            let bland = degenerate >= DEGENERATE_STREAK;
            let mut enter: Option<usize> = None;
            let mut best = -EPS_COST;
            for j in 0..allowed {
                let c = cost[j];
                if c < -EPS_COST {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if c < best {
                        best = c;
                        enter = Some(j);
                    }
                }
            }
            let Some(col) = enter else {
                return Ok(());
            };

            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.a.len() {
                let aij = self.a[i][col];
                if aij > EPS_PIVOT {
                    let ratio = self.b[i] / aij;
                    let replace = match leave {
                        None => true,
                        Some(l) => {
                            if ratio < best_ratio - 1e-12 {
                                true
                            } else if ratio <= best_ratio + 1e-12 {
                                // Tie: under Bland prefer the lowest basis
                                // variable; otherwise keep the lowest row.
                                bland && self.basis[i] < self.basis[l]
                            } else {
                                false
                            }
                        }
                    };
                    if replace {
                        best_ratio = ratio;
                        leave = Some(i);
                    }
                }
            }
            let Some(row) = leave else {
                return Err(LpError::Unbounded);
            };

            let before = *cost_rhs;
            self.pivot(row, col, cost, cost_rhs);
            *iterations += 1;
            if (*cost_rhs - before).abs() <= 1e-14 * (1.0 + before.abs()) {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
        }
    }
}

/// Solve the program with a two-phase dense simplex.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let n = lp.objective.len();
    let m = lp.rows.len();
    debug_assert!(lp.rows.iter().all(|(coef, _, _)| coef.len() == n));

    // Normalize: rhs ≥ 0, rows equilibrated to max |coefficient| = 1.
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::with_capacity(m);
    for (coef, sense, rhs) in &lp.rows {
        let (mut coef, mut sense, mut rhs) = (coef.clone(), *sense, *rhs);
        if rhs < 0.0 {
            for v in &mut coef {
                *v = -*v;
            }
            rhs = -rhs;
            sense = match sense {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
        let scale = coef
            .iter()
            .map(|v| math::abs(*v))
            .fold(0.0f64, f64::max)
            .max(math::abs(rhs));
        if scale > 0.0 {
            for v in &mut coef {
                *v /= scale;
            }
            rhs /= scale;
        }
        rows.push((coef, sense, rhs));
    }

    let n_slack = rows
        .iter()
        .filter(|(_, s, _)| !matches!(s, Sense::Eq))
        .count();

    // Columns that appear in exactly one row can seed the basis without an
    // artificial (the CVaR excess variables have exactly this shape).
    let mut appearance: Vec<(usize, usize, f64)> = Vec::with_capacity(n); // (count, row, coef)
    for j in 0..n {
        let mut count = 0;
        let mut last = (0usize, 0.0f64);
        for (i, (coef, _, _)) in rows.iter().enumerate() {
            if coef[j] != 0.0 {
                count += 1;
                last = (i, coef[j]);
            }
        }
        appearance.push((count, last.0, last.1));
    }

    let ncols_upper = n + n_slack + m;
    let mut a: Vec<Vec<f64>> = (0..m).map(|_| vec![0.0; ncols_upper]).collect();
    let mut b = vec![0.0; m];
    let mut basis = vec![usize::MAX; m];
    for (i, (coef, _, rhs)) in rows.iter().enumerate() {
        a[i][..n].copy_from_slice(coef);
        b[i] = *rhs;
    }

    let mut next_col = n;
    // Slack / surplus columns.
    for (i, (_, sense, _)) in rows.iter().enumerate() {
        match sense {
            Sense::Le => {
                a[i][next_col] = 1.0;
                basis[i] = next_col;
                next_col += 1;
            }
            Sense::Ge => {
                a[i][next_col] = -1.0;
                next_col += 1;
            }
            Sense::Eq => {}
        }
    }
    // Singleton crash for rows still lacking a basic column.
    let mut used_singleton = vec![false; n];
    for i in 0..m {
        if basis[i] != usize::MAX {
            continue;
        }
        for j in 0..n {
            let (count, row, coef) = appearance[j];
            if count == 1 && row == i && coef > EPS_PIVOT && !used_singleton[j] {
                used_singleton[j] = true;
                basis[i] = j;
                break;
            }
        }
    }
    // Artificial columns for whatever is left.
    let art_start = next_col;
    let mut n_art = 0;
    for i in 0..m {
        if basis[i] == usize::MAX {
            a[i][next_col] = 1.0;
            basis[i] = next_col;
            next_col += 1;
            n_art += 1;
        }
    }
    let ncols = next_col;
    for row in &mut a {
        row.truncate(ncols);
    }

    let mut tab = Tableau {
        a,
        b,
        basis,
        n_struct: n,
        art_start,
        ncols,
    };

    // Make crash-basis columns unit columns.
    let mut scratch_cost = vec![0.0; ncols];
    let mut scratch_rhs = 0.0;
    for i in 0..m {
        let col = tab.basis[i];
        if col < n && (tab.a[i][col] - 1.0).abs() > 0.0 {
            tab.pivot(i, col, &mut scratch_cost, &mut scratch_rhs);
        }
    }

    let limit = 200 + 60 * (m + ncols);
    let mut iterations = 0usize;

    // Phase 1.
    if n_art > 0 {
        let mut raw = vec![0.0; ncols];
        for j in art_start..ncols {
            raw[j] = 1.0;
        }
        let (mut cost, mut cost_rhs) = tab.reduce_costs(&raw);
        let infeasibility = -cost_rhs;
        if infeasibility > EPS_FEAS {
            tab.iterate(&mut cost, &mut cost_rhs, ncols, limit, &mut iterations)?;
        }
        let residual = -cost_rhs;
        if residual > EPS_FEAS {
            return Err(LpError::Infeasible { residual });
        }
        // Drive zero-level artificials out of the basis.
        for i in 0..m {
            if tab.basis[i] >= art_start {
                if let Some(col) = (0..art_start).find(|&j| math::abs(tab.a[i][j]) > EPS_PIVOT) {
                    tab.pivot(i, col, &mut cost, &mut cost_rhs);
                    iterations += 1;
                }
            }
        }
    }

    // Phase 2 on the real objective; artificial columns may not re-enter.
    let mut raw = vec![0.0; ncols];
    raw[..n].copy_from_slice(&lp.objective);
    let (mut cost, mut cost_rhs) = tab.reduce_costs(&raw);
    tab.iterate(&mut cost, &mut cost_rhs, art_start, limit, &mut iterations)?;

    // Any artificial still basic must sit at zero (redundant row).
    for i in 0..m {
        if tab.basis[i] >= tab.art_start && tab.b[i] > EPS_FEAS {
            return Err(LpError::Infeasible { residual: tab.b[i] });
        }
    }

    let mut x = vec![0.0; n];
    for (row, &col) in tab.basis.iter().enumerate() {
        if col < tab.n_struct {
            x[col] = tab.b[row];
        }
    }
    let objective = x
        .iter()
        .zip(&lp.objective)
        .map(|(xi, ci)| xi * ci)
        .sum::<f64>();
    Ok(LpSolution {
        x,
        objective,
        iterations,
    })
}
