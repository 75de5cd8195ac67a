//! Derivative-free minimizers used by the maximum-likelihood fits.
//!
//! Both searches are fully deterministic: no internal randomness, ties broken
//! by index. Fits that need multiple starts derive their jitter from a seeded
//! stream at the call site.

use alloc::vec::Vec;

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    /// Maximum number of objective evaluations.
    pub max_evals: usize,
    /// Stop when the simplex function spread falls below this (relative to 1 + |best|).
    pub f_tol: f64,
    /// Stop when the simplex diameter falls below this.
    pub x_tol: f64,
    /// Initial simplex edge length per coordinate.
    pub step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evals: 500,
            f_tol: 1e-10,
            x_tol: 1e-9,
            step: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    /// True when a tolerance triggered the stop (rather than the eval budget).
    pub converged: bool,
}

/// Nelder-Mead downhill simplex, standard coefficients
/// (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
pub fn nelder_mead<F>(f: F, start: &[f64], opts: &NelderMeadOptions) -> OptimResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.len();
    assert!(n >= 1);
    let mut evals = 0usize;
    let eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.to_vec());
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += opts.step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();

    let mut converged = false;
    while evals < opts.max_evals {
        // Order: best first. Stable sort keeps ties deterministic.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let simplex_sorted: Vec<Vec<f64>> = order.iter().map(|&i| simplex[i].clone()).collect();
        let values_sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        simplex = simplex_sorted;
        values = values_sorted;

        let spread = values[n] - values[0];
        let diameter = (1..=n)
            .map(|i| {
                simplex[i]
                    .iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| crate::math::abs(a - b))
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= opts.f_tol * (1.0 + crate::math::abs(values[0])) && diameter <= opts.x_tol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();

        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&simplex[n])
            .map(|(c, w)| c + (c - w))
            .collect();
        let f_reflect = eval(&reflect, &mut evals);

        if f_reflect < values[0] {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + 2.0 * (c - w))
                .collect();
            let f_expand = eval(&expand, &mut evals);
            if f_expand < f_reflect {
                simplex[n] = expand;
                values[n] = f_expand;
            } else {
                simplex[n] = reflect;
                values[n] = f_reflect;
            }
        } else if f_reflect < values[n - 1] {
            simplex[n] = reflect;
            values[n] = f_reflect;
        } else {
            let (point, f_point) = if f_reflect < values[n] {
                // Outside contraction.
                let c: Vec<f64> = centroid
                    .iter()
                    .zip(&reflect)
                    .map(|(c, r)| c + 0.5 * (r - c))
                    .collect();
                let fc = eval(&c, &mut evals);
                (c, fc)
            } else {
                // Inside contraction.
                let c: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[n])
                    .map(|(c, w)| c + 0.5 * (w - c))
                    .collect();
                let fc = eval(&c, &mut evals);
                (c, fc)
            };
            if f_point < values[n].min(f_reflect) {
                simplex[n] = point;
                values[n] = f_point;
            } else {
                // Shrink toward the best vertex.
                for i in 1..=n {
                    let best = simplex[0].clone();
                    for j in 0..n {
                        simplex[i][j] = best[j] + 0.5 * (simplex[i][j] - best[j]);
                    }
                    values[i] = eval(&simplex[i], &mut evals);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=n {
        if values[i] < values[best] {
            best = i;
        }
    }
    OptimResult {
        x: simplex[best].clone(),
        value: values[best],
        evals,
        converged,
    }
}

/// Coordinate-wise compass (pattern) search with strictly-improving moves.
///
/// Used to polish a Nelder-Mead result: on objectives with an exact symmetry
/// axis it walks the symmetric coordinate back onto the axis instead of
/// leaving it at simplex-collapse noise level.
pub fn compass_refine<F>(
    f: F,
    start: &[f64],
    initial_step: f64,
    min_step: f64,
    max_evals: usize,
) -> OptimResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.len();
    let mut x = start.to_vec();
    let mut fx = f(&x);
    let mut evals = 1usize;
    let mut step = initial_step;
    let mut last_gain = f64::INFINITY;
    while step >= min_step && evals < max_evals {
        let before = fx;
        let mut improved = false;
        for i in 0..n {
            for &dir in &[1.0f64, -1.0] {
                let mut cand = x.clone();
                cand[i] += dir * step;
                let fc = f(&cand);
                evals += 1;
                if fc < fx {
                    x = cand;
                    fx = fc;
                    improved = true;
                }
                if evals >= max_evals {
                    break;
                }
            }
        }
        last_gain = before - fx;
        if !improved {
            step *= 0.5;
        }
    }
    // Exhausting the budget while the last sweep moved the objective by a
    // relatively negligible amount still counts as converged.
    let converged = step < min_step || last_gain <= 1e-8 * (1.0 + crate::math::abs(fx));
    OptimResult {
        x,
        value: fx,
        evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2);
        let r = nelder_mead(
            f,
            &[0.0, 0.0],
            &NelderMeadOptions {
                max_evals: 400,
                ..Default::default()
            },
        );
        assert!(r.converged, "evals = {}", r.evals);
        assert!((r.x[0] - 3.0).abs() < 1e-6);
        assert!((r.x[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| {
            let a = 1.0 - x[0];
            let b = x[1] - x[0] * x[0];
            a * a + 100.0 * b * b
        };
        let nm = nelder_mead(
            f,
            &[-1.2, 1.0],
            &NelderMeadOptions {
                max_evals: 2000,
                ..Default::default()
            },
        );
        let r = compass_refine(f, &nm.x, 1e-3, 1e-12, 4000);
        assert!((r.x[0] - 1.0).abs() < 1e-4, "x = {:?}", r.x);
        assert!((r.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn compass_respects_symmetry_axis() {
        // Even in x1: strict-improvement steps never leave the axis.
        let f = |x: &[f64]| x[1] * x[1] + (x[0] - 2.0).powi(2);
        let r = compass_refine(f, &[0.0, 0.0], 0.5, 1e-12, 10_000);
        assert_eq!(r.x[1], 0.0);
        assert!((r.x[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn deterministic_across_calls() {
        let f = |x: &[f64]| (x[0] * x[0] - x[1]).abs() + x[1].abs().sqrt();
        let a = nelder_mead(f, &[0.7, 0.3], &NelderMeadOptions::default());
        let b = nelder_mead(f, &[0.7, 0.3], &NelderMeadOptions::default());
        assert_eq!(a.x, b.x);
        assert_eq!(a.value, b.value);
    }
}
