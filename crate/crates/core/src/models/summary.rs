use serde::{Deserialize, Serialize};

use crate::numerics::{hpd_interval, HpdInterval, NumericsError};

/// Mass of the interval reported in posterior summaries.
pub const SUMMARY_HPDI_MASS: f64 = 0.95;

/// Mean, SD and 95% HPDI of one scalar from posterior draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub hpdi: HpdInterval<f64>,
    #[serde(skip)]
    pub draws: Vec<f64>,
}

impl PosteriorSummary {
    pub fn from_draws(name: impl Into<String>, draws: Vec<f64>) -> Result<Self, NumericsError> {
        let hpdi = hpd_interval(&draws, SUMMARY_HPDI_MASS)?;
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(Self { name: name.into(), mean, sd: var.sqrt(), hpdi, draws })
    }
}

/// Summaries of every parameter coordinate and of δ from joint draws.
pub fn summarize_joint<P: super::ScalarParams>(
    names: &[String],
    draws: &[super::JointDraw<P>],
) -> Result<Vec<PosteriorSummary>, NumericsError> {
    let mut out = Vec::with_capacity(names.len() + 1);
    for (j, name) in names.iter().enumerate() {
        out.push(PosteriorSummary::from_draws(name.clone(), draws.iter().map(|d| d.theta.scalars()[j]).collect())?);
    }
    out.push(PosteriorSummary::from_draws("delta", draws.iter().map(|d| d.delta).collect())?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_a_small_sample() {
        let s = PosteriorSummary::from_draws("x", (0..10).map(f64::from).collect()).unwrap();
        assert_eq!(s.mean, 4.5);
        assert!((s.sd - (55.0f64 / 6.0).sqrt()).abs() < 1e-12);
        assert_eq!((s.hpdi.lower, s.hpdi.upper), (0.0, 9.0));
    }
}
