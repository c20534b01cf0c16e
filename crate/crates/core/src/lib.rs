//! Normalized power priors with a calibrated Bayes factor procedure for
//! choosing the Beta prior on the borrowing weight δ.

pub mod baselines;
pub mod bayesfactor;
pub mod cbf;
pub mod models;
pub mod numerics;
pub mod sim;

pub use numerics::Real;

/// `f64` quadrature rule on the unit interval.
pub type QuadRule = numerics::QuadratureRule<f64>;
/// `f32` quadrature rule on the unit interval.
pub type QuadRuleF32 = numerics::QuadratureRule<f32>;
/// `f64` empirical highest-density interval.
pub type Hpd = numerics::HpdInterval<f64>;
/// `f64` dense matrix.
pub type Mat = numerics::Matrix<f64>;
