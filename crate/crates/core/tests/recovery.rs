//! Simulation-recovery oracles: refit models from their own draws and check
//! the generators come back, plus quadrature checks on the density layer.

use esgbl_core::garch::{self, ArmaGarchParams, FitOptions};
use esgbl_core::math;
use esgbl_core::nig::{self, NigFitOptions, NigParams};
use esgbl_core::rng;

fn garch_truth() -> ArmaGarchParams {
    ArmaGarchParams {
        mean_const: 0.0,
        ar: 0.5,
        ma: -0.3,
        var_const: 1e-6,
        arch: 0.05,
        garch: 0.90,
        loglik: 0.0,
    }
}

#[test]
fn arma_garch_parameters_recover_from_simulation() {
    let truth = garch_truth();
    let mut r = rng::derive_stream(1001, &[]);
    let (series, _) = garch::simulate_gaussian(&truth, 10_000, 500, &mut r);
    let fit = garch::fit_arma_garch(&series, &FitOptions::default()).unwrap();
    assert!((fit.ar - truth.ar).abs() < 0.1, "ar {}", fit.ar);
    assert!((fit.ma - truth.ma).abs() < 0.1, "ma {}", fit.ma);
    assert!((fit.arch - truth.arch).abs() < 0.1, "arch {}", fit.arch);
    assert!((fit.garch - truth.garch).abs() < 0.1, "garch {}", fit.garch);
    assert!(
        ((fit.arch + fit.garch) - 0.95).abs() < 0.05,
        "persistence {}",
        fit.arch + fit.garch
    );
}

#[test]
fn fitted_likelihood_is_locally_optimal() {
    // 100 random feasible perturbations of the fitted parameters may not
    // beat the fitted log-likelihood.
    let truth = garch_truth();
    let mut r = rng::derive_stream(1002, &[]);
    let (series, _) = garch::simulate_gaussian(&truth, 4_000, 300, &mut r);
    let fit = garch::fit_arma_garch(&series, &FitOptions::default()).unwrap();
    let base = garch::log_likelihood(&fit, &series);
    assert!((base - fit.loglik).abs() < 1e-9);

    let mut perturb = rng::derive_stream(1003, &[]);
    for trial in 0..100 {
        let scale = 0.02 + 0.18 * rand::Rng::gen::<f64>(&mut perturb);
        let candidate = ArmaGarchParams {
            mean_const: fit.mean_const + scale * 1e-4 * rng::standard_normal(&mut perturb),
            ar: math::tanh(math::atanh(fit.ar) + scale * rng::standard_normal(&mut perturb)),
            ma: math::tanh(math::atanh(fit.ma) + scale * rng::standard_normal(&mut perturb)),
            var_const: fit.var_const
                * math::exp(scale * rng::standard_normal(&mut perturb)),
            arch: fit.arch,
            garch: fit.garch,
            loglik: 0.0,
        };
        let mut candidate = candidate;
        // Perturb the variance pair inside the stationarity region.
        let s = (fit.arch + fit.garch)
            * math::sigmoid(math::logit(0.5) + scale * rng::standard_normal(&mut perturb))
            * 2.0;
        let s = s.clamp(1e-6, 0.999);
        let share = (fit.arch / (fit.arch + fit.garch)).clamp(1e-6, 1.0 - 1e-6);
        candidate.arch = s * share;
        candidate.garch = s * (1.0 - share);
        assert!(candidate.is_valid(), "perturbation {trial} left the region");
        let ll = garch::log_likelihood(&candidate, &series);
        assert!(
            ll <= base + 1e-9,
            "perturbation {trial} beats the fit: {ll} > {base}"
        );
    }
}

#[test]
fn nig_shape_recovers_from_draws() {
    let truth = NigParams::standardized(1.5, -0.3).unwrap();
    let draws = nig::sample_standardized(&truth, 20_000, 2001).unwrap();
    let fit = nig::fit_standardized(&draws, &NigFitOptions::default()).unwrap();
    assert!((fit.alpha - 1.5).abs() < 0.15, "alpha {}", fit.alpha);
    assert!((fit.beta + 0.3).abs() < 0.15, "beta {}", fit.beta);
}

#[test]
fn nig_refit_roundtrip_over_seeds() {
    let truth = NigParams::standardized(1.8, 0.4).unwrap();
    for seed in 0..5u64 {
        let draws = nig::sample_standardized(&truth, 100_000, 3000 + seed).unwrap();
        let fit = nig::fit_standardized(&draws, &NigFitOptions::default()).unwrap();
        assert!(
            (fit.alpha - truth.alpha).abs() < 0.15,
            "seed {seed}: alpha {}",
            fit.alpha
        );
        assert!(
            (fit.beta - truth.beta).abs() < 0.15,
            "seed {seed}: beta {}",
            fit.beta
        );
    }
}

#[test]
fn gaussian_residuals_push_alpha_to_the_normal_limit() {
    let mut r = rng::derive_stream(2002, &[]);
    let z: Vec<f64> = (0..20_000).map(|_| rng::standard_normal(&mut r)).collect();
    let fit = nig::fit_standardized(&z, &NigFitOptions::default()).unwrap();
    assert!(fit.alpha > 5.0, "alpha {}", fit.alpha);
    // In the Gaussian limit alpha grows without bound, so asymmetry is
    // judged relative to it (and through the implied skewness).
    assert!(
        (fit.beta / fit.alpha).abs() < 0.05,
        "beta/alpha {}",
        fit.beta / fit.alpha
    );
    assert!(fit.skewness().abs() < 0.05, "skewness {}", fit.skewness());
}

/// Adaptive Simpson quadrature (test-side oracle).
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, m: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, 0.5 * (a + m), m);
        let right = simpson(f, m, 0.5 * (m + b), b);
        if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, m, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    recurse(f, a, b, simpson(f, a, m, b), tol, 40)
}

#[test]
fn density_integrates_to_one() {
    for (alpha, beta) in [(2.0, 0.0), (1.5, -0.3), (3.0, 1.2)] {
        let p = NigParams::standardized(alpha, beta).unwrap();
        let g = p.gamma();
        let half_width = 40.0 * p.delta / g;
        let f = |x: f64| nig::pdf(x, &p).unwrap();
        let mass = adaptive_simpson(&f, p.mu - half_width, p.mu + half_width, 1e-9);
        assert!(
            (mass - 1.0).abs() < 1e-6,
            "alpha {alpha} beta {beta}: mass {mass}"
        );
    }
}

#[test]
fn empirical_cdf_matches_quadrature_cdf() {
    let p = NigParams::standardized(1.5, -0.3).unwrap();
    let n = 100_000;
    let mut draws = nig::sample_standardized(&p, n, 424_242).unwrap();
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Cumulative Simpson on a fine grid.
    let (lo, hi) = (-15.0, 15.0);
    let grid = 30_000;
    let h = (hi - lo) / grid as f64;
    let mut cdf = vec![0.0f64; grid + 1];
    let pdf_at = |x: f64| nig::pdf(x, &p).unwrap();
    let mut acc = 0.0;
    let mut prev = pdf_at(lo);
    for i in 1..=grid {
        let x = lo + i as f64 * h;
        let mid = pdf_at(x - 0.5 * h);
        let cur = pdf_at(x);
        acc += h / 6.0 * (prev + 4.0 * mid + cur);
        cdf[i] = acc;
        prev = cur;
    }

    let mut ks = 0.0f64;
    for (i, &x) in draws.iter().enumerate() {
        let pos = ((x - lo) / h).clamp(0.0, grid as f64);
        let idx = pos as usize;
        let frac = pos - idx as f64;
        let theo = if idx >= grid {
            cdf[grid]
        } else {
            cdf[idx] + frac * (cdf[idx + 1] - cdf[idx])
        };
        let emp_hi = (i + 1) as f64 / n as f64;
        let emp_lo = i as f64 / n as f64;
        ks = ks.max((theo - emp_hi).abs()).max((theo - emp_lo).abs());
    }
    assert!(ks < 0.005, "Kolmogorov-Smirnov distance {ks}");
}
