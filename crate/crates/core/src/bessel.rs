//! Modified Bessel function of the third kind, order one.
//!
//! The density of the normal-inverse Gaussian law multiplies a decaying
//! `K₁` by a growing exponential, so the exponentially scaled variant
//! `k1e(x) = eˣ K₁(x)` is the primitive everything else is built on:
//! it stays in range for any argument the fitter can produce.
//!
//! Polynomial approximations follow Abramowitz & Stegun 9.8.3/9.8.7/9.8.8
//! (relative error below 8·10⁻⁹ for x ≤ 2 and 2.2·10⁻⁷ above).

use crate::math;

/// `I₁(x)` for |x| ≤ 3.75, via A&S 9.8.3.
fn i1_small(x: f64) -> f64 {
    let t = x / 3.75;
    let t2 = t * t;
    x * (0.5
        + t2 * (0.87890594
            + t2 * (0.51498869
                + t2 * (0.15084934
                    + t2 * (0.02658733 + t2 * (0.00301532 + t2 * 0.00032411))))))
}

/// Exponentially scaled `eˣ K₁(x)`; `x` must be positive.
pub fn k1e(x: f64) -> f64 {
    debug_assert!(x > 0.0, "k1e domain");
    if x <= 2.0 {
        let y = x * x / 4.0;
        let k1 = math::ln(x / 2.0) * i1_small(x)
            + (1.0
                + y * (0.15443144
                    + y * (-0.67278579
                        + y * (-0.18156897
                            + y * (-0.01919402 + y * (-0.00110404 + y * (-0.00004686)))))))
                / x;
        k1 * math::exp(x)
    } else {
        let t = 2.0 / x;
        (1.25331414
            + t * (0.23498619
                + t * (-0.03655620
                    + t * (0.01504268
                        + t * (-0.00780353 + t * (0.00325614 + t * (-0.00068245)))))))
            / math::sqrt(x)
    }
}

/// `K₁(x)`; underflows to zero for very large arguments.
pub fn k1(x: f64) -> f64 {
    k1e(x) * math::exp(-x)
}

/// `ln K₁(x)`, safe where `K₁` itself would underflow.
pub fn ln_k1(x: f64) -> f64 {
    math::ln(k1e(x)) - x
}
