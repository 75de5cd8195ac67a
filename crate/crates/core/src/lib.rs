//! Portfolio construction engine combining ESG-tilted Black-Litterman expected
//! returns, ARMA(1,1)-GARCH(1,1) + normal-inverse Gaussian scenario generation,
//! and CVaR-penalized allocation with a soft turnover constraint, plus a
//! rolling-window daily-rebalance backtester over a hyperparameter grid.
//!
//! The crate is `no_std` (with `alloc`) so the numeric engine can be embedded
//! anywhere; all file formats, CLI wiring, and parallel execution live in the
//! companion `esgbl` crate. Every transcendental goes through [`math`] (libm)
//! so results are bit-reproducible across platforms and build modes.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod backtest;
pub mod bessel;
pub mod black_litterman;
pub mod garch;
pub mod linalg;
pub mod market;
pub mod math;
pub mod metrics;
pub mod nig;
pub mod optim;
pub mod optimizer;
pub mod risk;
pub mod rng;
pub mod scenario;
pub mod shrinkage;
pub mod simplex;
