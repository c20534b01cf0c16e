//! Deterministic numerical kernels shared by the model, Bayes factor and
//! calibration layers.
//!
//! Everything that does not need a special function or a random variate is
//! generic over [`Real`], so the kernels run in `f32` as well as `f64`. The
//! special functions and variate generators are `f64` only.

mod hpd;
mod interp;
mod linalg;
mod optimize;
mod quadrature;
mod rng;
mod special;

pub use hpd::{
    empirical_fraction_at_or_below, empirical_survival_at, hpd_interval, shortest_window, HpdInterval, MIN_HPD_SAMPLES,
};
pub use interp::{LocalCubic, MonotoneCubic};
pub use linalg::{Cholesky, Matrix};
pub use optimize::{newton_maximize, NewtonOptions, NewtonResult, TwiceDifferentiable};
pub use quadrature::{gauss_hermite, integrate_unit_log, QuadratureRule, RuleLadder, UnitIntegral, MAX_NODES, POINTS_PER_PANEL};
pub use rng::{
    purpose, rng_draw, sample_beta, sample_binomial, sample_gamma, sample_poisson, sample_standard_normal, RngStream,
    StreamRng, VariateSpec,
};
pub use special::{log_beta, log_beta_density, log_binomial_coef, log_gamma, log_sum_exp, ln_beta};

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};
use thiserror::Error;

/// Floating-point scalar accepted by the generic kernels.
pub trait Real: Float + FromPrimitive + Debug + Send + Sync + 'static {
    /// Converts an `f64` literal; every literal used by the kernels fits.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in the scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("integrand is not finite at node {node}: {value}")]
    NonFiniteIntegrand { node: f64, value: f64 },
    #[error("insufficient data: need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("objective is not concave at the current iterate")]
    NotConcave,
    #[error("newton iteration did not converge after {iterations} iterations (gradient norm {gradient_norm})")]
    NoConvergence { iterations: usize, gradient_norm: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}
