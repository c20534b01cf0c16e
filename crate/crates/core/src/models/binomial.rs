use serde::{Deserialize, Serialize};

use super::{
    check_delta, check_draw_count, BetaShape, DeltaCurve, DeltaGrid, Family, JointDraw, ModelError, NppModel,
};
use crate::numerics::{ln_beta, log_binomial_coef, purpose, sample_beta, sample_binomial, RngStream, StreamRng};

/// Success count out of a number of trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinomialData {
    pub successes: u64,
    pub trials: u64,
}

impl BinomialData {
    /// `trials = 0` is accepted and stands for an empty study.
    pub fn new(successes: u64, trials: u64) -> Result<Self, ModelError> {
        if successes > trials {
            return Err(ModelError::InvalidData(format!("{successes} successes out of {trials} trials")));
        }
        Ok(Self { successes, trials })
    }

    pub fn failures(&self) -> u64 {
        self.trials - self.successes
    }
}

/// Initial Beta prior on the success probability.
pub type BetaPrior = BetaShape;

/// Beta-binomial model with one historical study.
#[derive(Debug, Clone)]
pub struct BinomialNpp {
    historical: BinomialData,
    prior: BetaPrior,
    hist_log_choose: f64,
}

/// `g(δ)` for the beta-binomial: the log pmf of `y` under
/// `BetaBinomial(N, δy₀ + p, δ(N₀ − y₀) + q)`.
#[derive(Debug, Clone)]
pub struct BinomialCurve {
    y: f64,
    n_minus_y: f64,
    log_choose: f64,
    y0: f64,
    n0_minus_y0: f64,
    p: f64,
    q: f64,
}

impl BinomialCurve {
    fn shapes(&self, delta: f64) -> (f64, f64) {
        (delta * self.y0 + self.p, delta * self.n0_minus_y0 + self.q)
    }

    /// Conditional posterior of θ given δ.
    pub fn theta_posterior(&self, delta: f64) -> (f64, f64) {
        let (a, b) = self.shapes(delta);
        (self.y + a, self.n_minus_y + b)
    }
}

impl DeltaCurve for BinomialCurve {
    fn log_g(&self, delta: f64) -> f64 {
        let (a, b) = self.shapes(delta);
        self.log_choose + ln_beta(self.y + a, self.n_minus_y + b) - ln_beta(a, b)
    }
}

impl BinomialNpp {
    pub fn new(historical: BinomialData, prior: BetaPrior) -> Result<Self, ModelError> {
        BinomialData::new(historical.successes, historical.trials)?;
        let hist_log_choose = log_binomial_coef(historical.trials, historical.successes);
        Ok(Self { historical, prior, hist_log_choose })
    }

    pub fn historical(&self) -> BinomialData {
        self.historical
    }

    pub fn prior(&self) -> BetaPrior {
        self.prior
    }

    fn curve_for(&self, current: &BinomialData) -> BinomialCurve {
        BinomialCurve {
            y: current.successes as f64,
            n_minus_y: current.failures() as f64,
            log_choose: log_binomial_coef(current.trials, current.successes),
            y0: self.historical.successes as f64,
            n0_minus_y0: self.historical.failures() as f64,
            p: self.prior.eta(),
            q: self.prior.nu(),
        }
    }
}

impl NppModel for BinomialNpp {
    type Data = BinomialData;
    type Param = f64;
    type Curve = BinomialCurve;

    fn family(&self) -> Family {
        Family::Binomial
    }

    fn param_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }

    fn validate_current(&self, current: &BinomialData) -> Result<(), ModelError> {
        BinomialData::new(current.successes, current.trials).map(|_| ())
    }

    fn log_conditional_marginal(&self, current: &BinomialData, delta: f64) -> Result<f64, ModelError> {
        check_delta(delta)?;
        self.validate_current(current)?;
        Ok(self.curve_for(current).log_g(delta))
    }

    fn log_norm_const(&self, delta: f64) -> Result<f64, ModelError> {
        check_delta(delta)?;
        let (p, q) = (self.prior.eta(), self.prior.nu());
        let a = delta * self.historical.successes as f64 + p;
        let b = delta * self.historical.failures() as f64 + q;
        Ok(delta * self.hist_log_choose + ln_beta(a, b) - ln_beta(p, q))
    }

    fn delta_curve(&self, current: &BinomialData) -> Result<BinomialCurve, ModelError> {
        self.validate_current(current)?;
        Ok(self.curve_for(current))
    }

    fn sample_joint_posterior(
        &self,
        _current: &BinomialData,
        curve: &BinomialCurve,
        delta_prior: BetaShape,
        n_draws: usize,
        stream: &RngStream,
    ) -> Result<Vec<JointDraw<f64>>, ModelError> {
        check_draw_count(n_draws)?;
        let grid = DeltaGrid::new(curve, delta_prior, 0.0)?;
        let mut rng = RngStream::new(stream.derived_seed(), [0, 0, purpose::JOINT_DRAWS]).rng();
        (0..n_draws)
            .map(|_| {
                let delta = grid.sample(&mut rng);
                let (a, b) = curve.theta_posterior(delta);
                let theta = sample_beta(&mut rng, a, b)?;
                Ok(JointDraw { theta, delta })
            })
            .collect()
    }

    fn simulate(&self, theta: &f64, template: &BinomialData, rng: &mut StreamRng) -> Result<BinomialData, ModelError> {
        let successes = sample_binomial(rng, template.trials, theta.clamp(0.0, 1.0))?;
        Ok(BinomialData { successes, trials: template.trials })
    }

    fn replicate_key(&self, data: &BinomialData) -> Option<u64> {
        Some(data.successes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(y0: u64, n0: u64) -> BinomialNpp {
        BinomialNpp::new(BinomialData::new(y0, n0).unwrap(), BetaShape::UNIFORM).unwrap()
    }

    #[test]
    fn uniform_predictive_without_history() {
        let m = model(0, 0);
        let current = BinomialData::new(1, 2).unwrap();
        for d in [0.0, 0.3, 1.0] {
            let g = m.log_conditional_marginal(&current, d).unwrap();
            assert!((g - (1.0f64 / 3.0).ln()).abs() < 1e-13);
        }
    }

    #[test]
    fn norm_const_closed_form() {
        let m = model(2, 10);
        assert_eq!(m.log_norm_const(0.0).unwrap(), 0.0);
        // B(2, 5) = 1/30, C(10, 2) = 45
        let want = 0.5 * 45f64.ln() + (1.0f64 / 30.0).ln();
        assert!((m.log_norm_const(0.5).unwrap() - want).abs() < 1e-12);
        assert!(m.log_norm_const(1.5).is_err());
    }

    #[test]
    fn conditional_posterior_endpoints() {
        let m = model(7, 30);
        let c = m.delta_curve(&BinomialData::new(3, 12).unwrap()).unwrap();
        assert_eq!(c.theta_posterior(0.0), (4.0, 10.0));
        assert_eq!(c.theta_posterior(1.0), (11.0, 33.0));
    }

    #[test]
    fn rejects_bad_counts() {
        assert!(BinomialData::new(3, 2).is_err());
        let m = model(1, 4);
        assert!(m.log_conditional_marginal(&BinomialData { successes: 5, trials: 4 }, 0.5).is_err());
        assert!(m.log_conditional_marginal(&BinomialData::new(1, 4).unwrap(), -0.1).is_err());
    }

    #[test]
    fn degenerate_draws_replicate_zero() {
        let m = model(1, 4);
        let draws = vec![JointDraw { theta: 0.0, delta: 0.5 }; 20];
        let template = BinomialData::new(3, 10).unwrap();
        let reps =
            super::super::posterior_predictive_replicate(&m, &draws, &template, &RngStream::new(1, [0, 0, 2]), 20)
                .unwrap();
        assert!(reps.iter().all(|r| r.successes == 0 && r.trials == 10));
        assert!(
            super::super::posterior_predictive_replicate(&m, &draws, &template, &RngStream::new(1, [0, 0, 2]), 21)
                .is_err()
        );
    }
}
