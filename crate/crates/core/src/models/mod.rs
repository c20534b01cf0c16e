//! Normalized power prior models.
//!
//! A model owns the historical data and the initial prior for the model
//! parameter. Given current data it exposes the conditional marginal
//!
//! ```text
//! g(δ) = ln ∫ L(θ|y) L(θ|y₀)^δ π₀(θ) dθ − ln C(δ),   C(δ) = ∫ L(θ|y₀)^δ π₀(θ) dθ
//! ```
//!
//! as a [`DeltaCurve`], joint posterior draws of `(θ, δ)`, and simulation of
//! new data at a parameter value.

mod binomial;
mod delta_grid;
mod gaussian;
mod glm;
mod mcmc;
mod summary;

pub use binomial::{BinomialCurve, BinomialData, BinomialNpp, BetaPrior};
pub use delta_grid::{DeltaGrid, DELTA_GRID_POINTS, GAUSSIAN_DELTA_FLOOR};
pub use gaussian::{GaussianCurve, GaussianEffect, GaussianNpp};
pub use glm::{GaussianPriorSpec, GlmCurve, GlmData, GlmNpp, Link, GLM_DELTA_GRID_POINTS};
pub use summary::{summarize_joint, PosteriorSummary, SUMMARY_HPDI_MASS};
pub use mcmc::{run_metropolis, split_rhat, MetropolisConfig, MetropolisDiagnostics, MetropolisOutput, RHAT_THRESHOLD};

use std::fmt::Debug;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{log_beta, purpose, NumericsError, RngStream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("δ must lie in [0, 1] (got {0})")]
    DeltaOutOfRange(f64),
    #[error("numerical failure: {0}")]
    Numerics(#[from] NumericsError),
    #[error("optimization failed at δ = {delta}: {source}")]
    Optimization { delta: f64, source: NumericsError },
    #[error("sampler did not converge: max split-R̂ {max_rhat:.4} ≥ {threshold}")]
    Convergence { max_rhat: f64, threshold: f64, rhat: Vec<f64> },
    #[error("invalid parameterization: {0}")]
    Parameterization(String),
}

/// Beta prior on the borrowing weight δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct BetaShape {
    eta: f64,
    nu: f64,
}

impl BetaShape {
    pub const UNIFORM: BetaShape = BetaShape { eta: 1.0, nu: 1.0 };

    pub fn new(eta: f64, nu: f64) -> Result<Self, ModelError> {
        if eta > 0.0 && nu > 0.0 && eta.is_finite() && nu.is_finite() {
            Ok(Self { eta, nu })
        } else {
            Err(ModelError::Parameterization(format!("Beta shapes must be positive (got {eta}, {nu})")))
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Prior mean of δ.
    pub fn mean(&self) -> f64 {
        self.eta / (self.eta + self.nu)
    }

    pub fn log_beta(&self) -> f64 {
        log_beta(self.eta, self.nu).expect("validated shapes")
    }

    /// Lexicographic order on `(η, ν)`.
    pub fn lex_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.eta.total_cmp(&other.eta).then(self.nu.total_cmp(&other.nu))
    }
}

impl TryFrom<(f64, f64)> for BetaShape {
    type Error = ModelError;
    fn try_from((eta, nu): (f64, f64)) -> Result<Self, Self::Error> {
        Self::new(eta, nu)
    }
}

impl From<BetaShape> for (f64, f64) {
    fn from(s: BetaShape) -> Self {
        (s.eta, s.nu)
    }
}

impl std::fmt::Display for BetaShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Beta({}, {})", self.eta, self.nu)
    }
}

/// One draw from the joint posterior of `(θ, δ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDraw<P> {
    pub theta: P,
    pub delta: f64,
}

/// Model family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Binomial,
    Gaussian,
    PoissonGlm,
    LogisticGlm,
}

/// `δ ↦ g(δ)` for one current dataset.
pub trait DeltaCurve: Send + Sync {
    fn log_g(&self, delta: f64) -> f64;
}

/// Model parameter exposed as a list of named scalars for summaries.
pub trait ScalarParams {
    fn scalars(&self) -> Vec<f64>;
}

impl ScalarParams for f64 {
    fn scalars(&self) -> Vec<f64> {
        vec![*self]
    }
}

impl ScalarParams for Vec<f64> {
    fn scalars(&self) -> Vec<f64> {
        self.clone()
    }
}

pub(crate) fn check_delta(delta: f64) -> Result<(), ModelError> {
    if (0.0..=1.0).contains(&delta) {
        Ok(())
    } else {
        Err(ModelError::DeltaOutOfRange(delta))
    }
}

/// A normalized power prior model with fixed historical data.
pub trait NppModel: Send + Sync {
    type Data: Clone + Debug + Send + Sync;
    type Param: Clone + Debug + Send + Sync + ScalarParams;
    type Curve: DeltaCurve;

    fn family(&self) -> Family;

    /// Names of the scalars returned by [`ScalarParams::scalars`].
    fn param_names(&self) -> Vec<String>;

    /// Checks that current data are compatible with this model.
    fn validate_current(&self, current: &Self::Data) -> Result<(), ModelError>;

    /// `g(δ)` evaluated from scratch.
    fn log_conditional_marginal(&self, current: &Self::Data, delta: f64) -> Result<f64, ModelError>;

    /// `ln C(δ)`.
    fn log_norm_const(&self, delta: f64) -> Result<f64, ModelError>;

    /// `g` for one current dataset, prepared for repeated evaluation.
    fn delta_curve(&self, current: &Self::Data) -> Result<Self::Curve, ModelError>;

    fn sample_joint_posterior(
        &self,
        current: &Self::Data,
        curve: &Self::Curve,
        delta_prior: BetaShape,
        n_draws: usize,
        stream: &RngStream,
    ) -> Result<Vec<JointDraw<Self::Param>>, ModelError>;

    /// Simulates a dataset shaped like `template` from the likelihood at `theta`.
    fn simulate(&self, theta: &Self::Param, template: &Self::Data, rng: &mut crate::numerics::StreamRng) -> Result<Self::Data, ModelError>;

    /// Exact key for datasets that repeat often (e.g. a binomial count), so
    /// callers can memoize per-dataset work.
    fn replicate_key(&self, _data: &Self::Data) -> Option<u64> {
        None
    }
}

/// Minimum posterior draw count.
pub const MIN_JOINT_DRAWS: usize = 100;

pub(crate) fn check_draw_count(n_draws: usize) -> Result<(), ModelError> {
    if n_draws < MIN_JOINT_DRAWS {
        Err(ModelError::Parameterization(format!("need at least {MIN_JOINT_DRAWS} draws, asked for {n_draws}")))
    } else {
        Ok(())
    }
}

/// Simulates `k` replicated datasets from the posterior predictive.
///
/// Each replicate uses a distinct joint draw picked uniformly without
/// replacement, so `k` may not exceed the number of draws.
pub fn posterior_predictive_replicate<M: NppModel>(
    model: &M,
    draws: &[JointDraw<M::Param>],
    template: &M::Data,
    stream: &RngStream,
    k: usize,
) -> Result<Vec<M::Data>, ModelError> {
    if draws.is_empty() {
        return Err(ModelError::Parameterization("no posterior draws to replicate from".into()));
    }
    if k == 0 || k > draws.len() {
        return Err(ModelError::Parameterization(format!("cannot take {k} replicates from {} draws", draws.len())));
    }
    let chosen = choose_without_replacement(draws.len(), k, stream);
    let base = stream.derived_seed();
    chosen
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let mut rng = RngStream::new(base, [i as u64, 0, purpose::REPLICATE_DATA]).rng();
            model.simulate(&draws[d].theta, template, &mut rng)
        })
        .collect()
}

/// First `k` entries of a uniformly random permutation of `0..n`.
pub(crate) fn choose_without_replacement(n: usize, k: usize, stream: &RngStream) -> Vec<usize> {
    use rand::Rng;
    let mut rng = stream.rng();
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}
