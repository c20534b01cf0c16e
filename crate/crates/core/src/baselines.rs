//! Mixture-prior comparators for binomial and Gaussian endpoints: the robust
//! meta-analytic-predictive prior (fixed vague weight) and the self-adapting
//! mixture prior (vague weight set by a likelihood ratio at the historical
//! estimate).

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::models::{BinomialData, GaussianEffect, ModelError, PosteriorSummary};
use crate::numerics::{ln_beta, log_binomial_coef, log_sum_exp, sample_beta, sample_standard_normal, RngStream};

/// Draws used for mixture posterior summaries.
pub const MIXTURE_SUMMARY_DRAWS: usize = 100_000;

/// Default clinically significant difference on the probability scale.
pub const DEFAULT_BINOMIAL_CSD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixtureKind {
    Rmap,
    Sam,
}

/// Conjugate prior for the endpoint parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Conjugate {
    Beta { a: f64, b: f64 },
    Normal { mean: f64, variance: f64 },
}

impl Conjugate {
    fn validate(&self) -> Result<(), ModelError> {
        let ok = match *self {
            Conjugate::Beta { a, b } => a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
            Conjugate::Normal { mean, variance } => mean.is_finite() && variance > 0.0 && variance.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(ModelError::Parameterization(format!("invalid conjugate prior {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Conjugate::Beta { a, b } => a / (a + b),
            Conjugate::Normal { mean, .. } => mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Conjugate::Beta { a, b } => a * b / ((a + b).powi(2) * (a + b + 1.0)),
            Conjugate::Normal { variance, .. } => variance,
        }
    }
}

/// Current or historical data of a conjugate endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Endpoint {
    Binomial(BinomialData),
    Gaussian(GaussianEffect),
}

impl Endpoint {
    /// Posterior after observing these data under `prior`, and the log
    /// marginal likelihood of the data.
    pub fn update(&self, prior: Conjugate) -> Result<(Conjugate, f64), ModelError> {
        prior.validate()?;
        match (*self, prior) {
            (Endpoint::Binomial(d), Conjugate::Beta { a, b }) => {
                let (y, f) = (d.successes as f64, d.failures() as f64);
                let post = Conjugate::Beta { a: a + y, b: b + f };
                let lm = log_binomial_coef(d.trials, d.successes) + ln_beta(a + y, b + f) - ln_beta(a, b);
                Ok((post, lm))
            }
            (Endpoint::Gaussian(d), Conjugate::Normal { mean, variance }) => {
                let precision = 1.0 / variance + 1.0 / d.variance;
                let post_mean = (mean / variance + d.estimate / d.variance) / precision;
                let s = variance + d.variance;
                let lm = -0.5 * ((2.0 * PI * s).ln() + (d.estimate - mean).powi(2) / s);
                Ok((Conjugate::Normal { mean: post_mean, variance: 1.0 / precision }, lm))
            }
            _ => Err(mismatch()),
        }
    }

    /// Log likelihood of the data at parameter value `theta`, `None` when
    /// `theta` is outside the parameter space.
    pub fn log_likelihood(&self, theta: f64) -> Option<f64> {
        match *self {
            Endpoint::Binomial(d) => {
                if !(0.0..=1.0).contains(&theta) {
                    return None;
                }
                let term = |k: u64, p: f64| if k == 0 { 0.0 } else { k as f64 * p.ln() };
                Some(term(d.successes, theta) + term(d.failures(), 1.0 - theta))
            }
            Endpoint::Gaussian(d) => {
                if !theta.is_finite() {
                    return None;
                }
                Some(-0.5 * ((2.0 * PI * d.variance).ln() + (d.estimate - theta).powi(2) / d.variance))
            }
        }
    }

    /// Posterior of the parameter from these data alone under `vague`
    /// (binomial) or the flat prior (Gaussian).
    fn informative(&self, vague: Conjugate) -> Result<Conjugate, ModelError> {
        match (*self, vague) {
            (Endpoint::Binomial(_), Conjugate::Beta { .. }) => Ok(self.update(vague)?.0),
            (Endpoint::Gaussian(d), Conjugate::Normal { .. }) => {
                Ok(Conjugate::Normal { mean: d.estimate, variance: d.variance })
            }
            _ => Err(mismatch()),
        }
    }
}

fn mismatch() -> ModelError {
    ModelError::Parameterization("endpoint and prior families differ".into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub prior: Conjugate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePrior {
    pub kind: MixtureKind,
    /// Vague component first, informative second.
    pub components: Vec<MixtureComponent>,
}

impl MixturePrior {
    fn two(kind: MixtureKind, vague_weight: f64, vague: Conjugate, informative: Conjugate) -> Self {
        Self {
            kind,
            components: vec![
                MixtureComponent { weight: vague_weight, prior: vague },
                MixtureComponent { weight: 1.0 - vague_weight, prior: informative },
            ],
        }
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.prior.mean()).sum()
    }

    /// Weight on the informative (historical) component.
    pub fn informative_weight(&self) -> f64 {
        self.components.get(1).map_or(0.0, |c| c.weight)
    }
}

/// RMAP prior: weight `omega` on `vague`, `1 − omega` on the historical posterior.
pub fn build_rmap(historical: &Endpoint, omega: f64, vague: Conjugate) -> Result<MixturePrior, ModelError> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(ModelError::Parameterization(format!("omega must lie in [0, 1] (got {omega})")));
    }
    vague.validate()?;
    Ok(MixturePrior::two(MixtureKind::Rmap, omega, vague, historical.informative(vague)?))
}

/// SAM prior. The informative weight is `R / (1 + R)` with
/// `R = L(y | θ̂₀) / max(L(y | θ̂₀ − csd), L(y | θ̂₀ + csd))` and `θ̂₀` the
/// historical posterior mean; a shifted value outside the parameter space is
/// left out of the max.
pub fn build_sam(historical: &Endpoint, current: &Endpoint, csd: f64, vague: Conjugate) -> Result<MixturePrior, ModelError> {
    if !(csd > 0.0) {
        return Err(ModelError::Parameterization(format!("csd must be positive (got {csd})")));
    }
    vague.validate()?;
    let informative = historical.informative(vague)?;
    current.update(vague)?;
    let center = informative.mean();
    let at = current.log_likelihood(center).ok_or_else(|| {
        ModelError::Parameterization(format!("historical estimate {center} is outside the parameter space"))
    })?;
    let shifted: Vec<f64> =
        [center - csd, center + csd].into_iter().filter_map(|t| current.log_likelihood(t)).collect();
    if shifted.is_empty() {
        return Err(ModelError::Parameterization(format!("both θ̂₀ ± {csd} fall outside the parameter space")));
    }
    let log_r = at - shifted.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // R/(1+R) = σ(ln R)
    let w = if log_r >= 0.0 { 1.0 / (1.0 + (-log_r).exp()) } else { log_r.exp() / (1.0 + log_r.exp()) };
    Ok(MixturePrior::two(MixtureKind::Sam, 1.0 - w, vague, informative))
}

/// Conjugate update of every component, weights renormalized by the
/// component marginal likelihoods, and a 10⁵-draw summary of the posterior.
pub fn mixture_posterior(
    prior: &MixturePrior,
    current: &Endpoint,
    stream: &RngStream,
) -> Result<(MixturePrior, PosteriorSummary), ModelError> {
    if prior.components.is_empty() {
        return Err(ModelError::Parameterization("mixture has no components".into()));
    }
    let mut posts = Vec::with_capacity(prior.components.len());
    let mut log_w = Vec::with_capacity(prior.components.len());
    for c in &prior.components {
        let (post, lm) = current.update(c.prior)?;
        posts.push(post);
        log_w.push(c.weight.ln() + lm);
    }
    let total = log_sum_exp(&log_w);
    let components: Vec<MixtureComponent> =
        posts.into_iter().zip(&log_w).map(|(prior, &lw)| MixtureComponent { weight: (lw - total).exp(), prior }).collect();
    let posterior = MixturePrior { kind: prior.kind, components };

    let mut rng = stream.rng();
    let draws: Vec<f64> = (0..MIXTURE_SUMMARY_DRAWS)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = posterior.components.len() - 1;
            for (k, c) in posterior.components.iter().enumerate() {
                acc += c.weight;
                if u < acc {
                    chosen = k;
                    break;
                }
            }
            match posterior.components[chosen].prior {
                Conjugate::Beta { a, b } => sample_beta(&mut rng, a, b).map_err(ModelError::from),
                Conjugate::Normal { mean, variance } => Ok(mean + variance.sqrt() * sample_standard_normal(&mut rng)),
            }
        })
        .collect::<Result<_, _>>()?;
    let name = match current {
        Endpoint::Binomial(_) => "theta",
        Endpoint::Gaussian(_) => "mu",
    };
    Ok((posterior, PosteriorSummary::from_draws(name, draws)?))
}
