use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{
    check_delta, check_draw_count, BetaShape, DeltaCurve, DeltaGrid, Family, JointDraw, ModelError, NppModel,
    GAUSSIAN_DELTA_FLOOR,
};
use crate::numerics::{purpose, sample_standard_normal, NumericsError, RngStream, StreamRng};

/// Effect estimate with its known sampling variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianEffect {
    pub estimate: f64,
    pub variance: f64,
}

impl GaussianEffect {
    pub fn new(estimate: f64, variance: f64) -> Result<Self, ModelError> {
        let e = Self { estimate, variance };
        e.validate()?;
        Ok(e)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if !self.estimate.is_finite() || !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(ModelError::InvalidData(format!(
                "effect {} with variance {} (variance must be positive)",
                self.estimate, self.variance
            )));
        }
        Ok(())
    }
}

/// Normal mean with known variance and a flat initial prior on the mean.
#[derive(Debug, Clone)]
pub struct GaussianNpp {
    historical: GaussianEffect,
}

/// `g(δ) = ln N(μ̂ | μ̂₀, σ² + σ₀²/δ)`.
#[derive(Debug, Clone)]
pub struct GaussianCurve {
    current: GaussianEffect,
    historical: GaussianEffect,
}

impl GaussianCurve {
    /// Mean and variance of the mean given δ.
    pub fn mean_posterior(&self, delta: f64) -> (f64, f64) {
        let (c, h) = (self.current, self.historical);
        let precision = 1.0 / c.variance + delta / h.variance;
        let mean = (c.estimate / c.variance + delta * h.estimate / h.variance) / precision;
        (mean, 1.0 / precision)
    }
}

impl DeltaCurve for GaussianCurve {
    fn log_g(&self, delta: f64) -> f64 {
        if delta == 0.0 {
            // flat-prior limit; never reached by the interior quadrature nodes
            return 0.0;
        }
        let var = self.current.variance + self.historical.variance / delta;
        let z = self.current.estimate - self.historical.estimate;
        -0.5 * ((2.0 * PI * var).ln() + z * z / var)
    }
}

impl GaussianNpp {
    pub fn new(historical: GaussianEffect) -> Result<Self, ModelError> {
        historical.validate()?;
        Ok(Self { historical })
    }

    pub fn historical(&self) -> GaussianEffect {
        self.historical
    }
}

impl NppModel for GaussianNpp {
    type Data = GaussianEffect;
    type Param = f64;
    type Curve = GaussianCurve;

    fn family(&self) -> Family {
        Family::Gaussian
    }

    fn param_names(&self) -> Vec<String> {
        vec!["mu".into()]
    }

    fn validate_current(&self, current: &GaussianEffect) -> Result<(), ModelError> {
        current.validate()
    }

    fn log_conditional_marginal(&self, current: &GaussianEffect, delta: f64) -> Result<f64, ModelError> {
        check_delta(delta)?;
        Ok(self.delta_curve(current)?.log_g(delta))
    }

    /// Finite for δ > 0 only: the flat prior makes `C(0)` infinite.
    fn log_norm_const(&self, delta: f64) -> Result<f64, ModelError> {
        check_delta(delta)?;
        if delta == 0.0 {
            return Err(NumericsError::Domain("C(0) is infinite under the flat prior".into()).into());
        }
        let two_pi_var = 2.0 * PI * self.historical.variance;
        Ok(-0.5 * delta * two_pi_var.ln() + 0.5 * (two_pi_var / delta).ln())
    }

    fn delta_curve(&self, current: &GaussianEffect) -> Result<GaussianCurve, ModelError> {
        current.validate()?;
        Ok(GaussianCurve { current: *current, historical: self.historical })
    }

    fn sample_joint_posterior(
        &self,
        _current: &GaussianEffect,
        curve: &GaussianCurve,
        delta_prior: BetaShape,
        n_draws: usize,
        stream: &RngStream,
    ) -> Result<Vec<JointDraw<f64>>, ModelError> {
        check_draw_count(n_draws)?;
        let grid = DeltaGrid::new(curve, delta_prior, GAUSSIAN_DELTA_FLOOR)?;
        let mut rng = RngStream::new(stream.derived_seed(), [0, 0, purpose::JOINT_DRAWS]).rng();
        Ok((0..n_draws)
            .map(|_| {
                let delta = grid.sample(&mut rng);
                let (m, v) = curve.mean_posterior(delta);
                JointDraw { theta: m + v.sqrt() * sample_standard_normal(&mut rng), delta }
            })
            .collect())
    }

    fn simulate(&self, theta: &f64, template: &GaussianEffect, rng: &mut StreamRng) -> Result<GaussianEffect, ModelError> {
        let estimate = theta + template.variance.sqrt() * sample_standard_normal(rng);
        GaussianEffect::new(estimate, template.variance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginal_at_full_borrowing() {
        let m = GaussianNpp::new(GaussianEffect::new(0.0, 1.0).unwrap()).unwrap();
        let g = m.log_conditional_marginal(&GaussianEffect::new(0.0, 1.0).unwrap(), 1.0).unwrap();
        assert!((g + 0.5 * (4.0 * PI).ln()).abs() < 1e-14);
        assert_eq!(m.log_conditional_marginal(&GaussianEffect::new(0.3, 1.0).unwrap(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn norm_const_is_the_tempered_gaussian_integral() {
        let m = GaussianNpp::new(GaussianEffect::new(0.4, 2.0).unwrap()).unwrap();
        assert!(m.log_norm_const(0.0).is_err());
        // ∫ N(0.4 | μ, 2)^{0.3} dμ by the trapezoid rule
        let d = 0.3;
        let h = 1e-3;
        let s: f64 = (-200_000..=200_000)
            .map(|i| {
                let mu = 0.4 + i as f64 * h;
                (d * (-0.5 * (2.0 * PI * 2.0f64).ln() - (0.4 - mu).powi(2) / 4.0)).exp() * h
            })
            .sum();
        assert!((m.log_norm_const(d).unwrap() - s.ln()).abs() < 1e-9);
    }

    #[test]
    fn conditional_mean_moves_monotonically_to_pooled() {
        let m = GaussianNpp::new(GaussianEffect::new(2.0, 0.5).unwrap()).unwrap();
        let c = m.delta_curve(&GaussianEffect::new(-1.0, 1.0).unwrap()).unwrap();
        assert!((c.mean_posterior(0.0).0 + 1.0).abs() < 1e-15);
        let pooled = (-1.0 / 1.0 + 2.0 / 0.5) / (1.0 + 2.0);
        assert!((c.mean_posterior(1.0).0 - pooled).abs() < 1e-14);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=100 {
            let mean = c.mean_posterior(i as f64 / 100.0).0;
            assert!(mean >= prev);
            prev = mean;
        }
    }

    #[test]
    fn rejects_non_positive_variance() {
        assert!(GaussianEffect::new(0.0, 0.0).is_err());
        assert!(GaussianEffect::new(f64::NAN, 1.0).is_err());
    }
}
