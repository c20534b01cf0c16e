//! Marginal likelihoods under Beta priors on δ, log Bayes factors against
//! the Beta(1,1) reference, and the Jeffreys evidence scale.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::models::{BetaShape, DeltaCurve, ModelError, NppModel};
use crate::numerics::{integrate_unit_log, NumericsError, QuadratureRule, RuleLadder, UnitIntegral};

/// Candidate δ priors compared against the Beta(1,1) null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<BetaShape>", into = "Vec<BetaShape>")]
pub struct HypothesisGrid {
    hypotheses: Vec<BetaShape>,
}

impl HypothesisGrid {
    /// Rejects the null shape among the alternatives and duplicate pairs.
    pub fn new(hypotheses: Vec<BetaShape>) -> Result<Self, ModelError> {
        if hypotheses.is_empty() {
            return Err(ModelError::Parameterization("hypothesis grid is empty".into()));
        }
        for (i, h) in hypotheses.iter().enumerate() {
            if *h == BetaShape::UNIFORM {
                return Err(ModelError::Parameterization("Beta(1, 1) is the null and cannot be an alternative".into()));
            }
            if hypotheses[..i].contains(h) {
                return Err(ModelError::Parameterization(format!("duplicate hypothesis {h}")));
            }
        }
        Ok(Self { hypotheses })
    }

    pub fn hypotheses(&self) -> &[BetaShape] {
        &self.hypotheses
    }

    pub fn null_shape(&self) -> BetaShape {
        BetaShape::UNIFORM
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }
}

impl TryFrom<Vec<BetaShape>> for HypothesisGrid {
    type Error = ModelError;
    fn try_from(v: Vec<BetaShape>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<HypothesisGrid> for Vec<BetaShape> {
    fn from(g: HypothesisGrid) -> Self {
        g.hypotheses
    }
}

/// `g(δ)` cached at the nodes of every rung of the shared quadrature ladder,
/// so any number of Beta priors integrate against one evaluation of `g`.
pub struct EvidenceCurve<C> {
    curve: C,
    ladder: &'static RuleLadder<f64>,
    rungs: Vec<OnceLock<Result<Vec<f64>, NumericsError>>>,
    null: OnceLock<Result<UnitIntegral<f64>, NumericsError>>,
}

impl<C: DeltaCurve> EvidenceCurve<C> {
    pub fn new(curve: C) -> Self {
        let ladder = RuleLadder::shared();
        let rungs = ladder.rungs().iter().map(|_| OnceLock::new()).collect();
        Self { curve, ladder, rungs, null: OnceLock::new() }
    }

    pub fn curve(&self) -> &C {
        &self.curve
    }

    fn values(&self, rung: usize) -> Result<&[f64], NumericsError> {
        let rule = &self.ladder.rungs()[rung];
        let cached = self.rungs[rung].get_or_init(|| {
            rule.nodes()
                .iter()
                .map(|&d| {
                    let v = self.curve.log_g(d);
                    if v.is_nan() || v == f64::INFINITY {
                        Err(NumericsError::NonFiniteIntegrand { node: d, value: v })
                    } else {
                        Ok(v)
                    }
                })
                .collect()
        });
        cached.as_deref().map_err(Clone::clone)
    }

    /// `ln m(y | δ ~ Beta(η, ν))` with the same doubling rule as
    /// [`integrate_unit_log`].
    pub fn log_marginal(&self, shape: BetaShape) -> Result<UnitIntegral<f64>, NumericsError> {
        let (a, b, lb) = (shape.eta(), shape.nu(), shape.log_beta());
        let estimate = |rung: usize| -> Result<f64, NumericsError> {
            let rule: &QuadratureRule<f64> = &self.ladder.rungs()[rung];
            let g = self.values(rung)?;
            if g.iter().all(|&v| v == g[0]) {
                // a flat curve integrates to itself under any prior
                return Ok(g[0]);
            }
            let terms: Vec<f64> = g.iter().zip(rule.log_beta_density(a, b, lb)).map(|(g, p)| g + p).collect();
            Ok(rule.log_apply(&terms))
        };
        let mut prev = estimate(0)?;
        for rung in 1..self.rungs.len() {
            let next = estimate(rung)?;
            if prev == next || (next - prev).abs() < 1e-8 {
                return Ok(UnitIntegral { log_value: next, nodes_used: self.ladder.rungs()[rung].len(), converged: true });
            }
            prev = next;
        }
        let nodes_used = self.ladder.rungs().last().map_or(0, |r| r.len());
        Ok(UnitIntegral { log_value: prev, nodes_used, converged: false })
    }

    /// Marginal under the Beta(1,1) reference, computed once.
    pub fn null_log_marginal(&self) -> Result<UnitIntegral<f64>, NumericsError> {
        self.null.get_or_init(|| self.log_marginal(BetaShape::UNIFORM)).clone()
    }

    /// `ln BF` of `alt` against Beta(1,1); positive favors `alt`.
    pub fn log_bf(&self, alt: BetaShape) -> Result<LogBf, NumericsError> {
        let null = self.null_log_marginal()?;
        if alt == BetaShape::UNIFORM {
            return Ok(LogBf { value: 0.0, converged: null.converged });
        }
        let m = self.log_marginal(alt)?;
        Ok(LogBf { value: m.log_value - null.log_value, converged: m.converged && null.converged })
    }
}

/// A log Bayes factor with the convergence flag of its two integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogBf {
    pub value: f64,
    pub converged: bool,
}

/// `ln m(y | δ ~ shape)` for one current dataset.
pub fn log_marginal<M: NppModel>(model: &M, current: &M::Data, shape: BetaShape) -> Result<UnitIntegral<f64>, ModelError> {
    let ev = EvidenceCurve::new(model.delta_curve(current)?);
    Ok(ev.log_marginal(shape)?)
}

/// [`log_marginal`] without the δ-curve cache: `g` is recomputed from the
/// model at every quadrature node.
pub fn log_marginal_uncached<M: NppModel>(
    model: &M,
    current: &M::Data,
    shape: BetaShape,
) -> Result<UnitIntegral<f64>, ModelError> {
    let failure = OnceLock::new();
    let (a, b, lb) = (shape.eta(), shape.nu(), shape.log_beta());
    let out = integrate_unit_log(
        |d: f64| match model.log_conditional_marginal(current, d) {
            Ok(g) => g + (a - 1.0) * d.ln() + (b - 1.0) * (-d).ln_1p() - lb,
            Err(e) => {
                let _ = failure.set(e);
                f64::NAN
            }
        },
        &QuadratureRule::coarsest(),
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(out?)
}

/// `ln BF` of `alt` against Beta(1,1) for one current dataset.
pub fn log_bf<M: NppModel>(model: &M, current: &M::Data, alt: BetaShape) -> Result<LogBf, ModelError> {
    let ev = EvidenceCurve::new(model.delta_curve(current)?);
    Ok(ev.log_bf(alt)?)
}

/// Jeffreys scale categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvidenceLabel {
    BarelyWorthMentioning,
    Substantial,
    Strong,
    VeryStrong,
    Decisive,
}

impl EvidenceLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::BarelyWorthMentioning => "barely-worth-mentioning",
            Self::Substantial => "substantial",
            Self::Strong => "strong",
            Self::VeryStrong => "very-strong",
            Self::Decisive => "decisive",
        }
    }

    /// `[lower, upper)` bounds on `|log₁₀ BF|`.
    pub fn log10_bounds(&self) -> (f64, f64) {
        match self {
            Self::BarelyWorthMentioning => (0.0, 0.5),
            Self::Substantial => (0.5, 1.0),
            Self::Strong => (1.0, 1.5),
            Self::VeryStrong => (1.5, 2.0),
            Self::Decisive => (2.0, f64::INFINITY),
        }
    }
}

/// Which hypothesis the evidence points to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvidenceDirection {
    Alternative,
    Null,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvidenceCategory {
    pub label: EvidenceLabel,
    pub direction: EvidenceDirection,
}

impl EvidenceCategory {
    pub fn log10_bounds(&self) -> (f64, f64) {
        self.label.log10_bounds()
    }
}

impl std::fmt::Display for EvidenceCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.direction {
            EvidenceDirection::Neutral => write!(f, "{}", self.label.as_str()),
            EvidenceDirection::Alternative => write!(f, "{} (alternative)", self.label.as_str()),
            EvidenceDirection::Null => write!(f, "{} (null)", self.label.as_str()),
        }
    }
}

/// Jeffreys-scale category of a natural-log Bayes factor. Negative values
/// classify the reciprocal and point to the null.
pub fn classify_evidence(log_bf: f64) -> EvidenceCategory {
    let direction = if log_bf > 0.0 {
        EvidenceDirection::Alternative
    } else if log_bf < 0.0 {
        EvidenceDirection::Null
    } else {
        EvidenceDirection::Neutral
    };
    let x = log_bf.abs() / std::f64::consts::LN_10;
    let label = [
        EvidenceLabel::BarelyWorthMentioning,
        EvidenceLabel::Substantial,
        EvidenceLabel::Strong,
        EvidenceLabel::VeryStrong,
        EvidenceLabel::Decisive,
    ]
    .into_iter()
    .find(|l| {
        let (lo, hi) = l.log10_bounds();
        // bound values computed through ln 10 may land a hair below
        x >= lo - 1e-12 && x < hi - 1e-12
    })
    .unwrap_or(EvidenceLabel::Decisive);
    EvidenceCategory { label, direction }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{BinomialData, BinomialNpp, GaussianEffect, GaussianNpp};

    fn shape(a: f64, b: f64) -> BetaShape {
        BetaShape::new(a, b).unwrap()
    }

    #[test]
    fn grid_rejects_null_and_duplicates() {
        assert!(HypothesisGrid::new(vec![BetaShape::UNIFORM]).is_err());
        assert!(HypothesisGrid::new(vec![shape(2.0, 3.0), shape(2.0, 3.0)]).is_err());
        let g = HypothesisGrid::new(vec![shape(2.0, 3.0), shape(3.0, 2.0)]).unwrap();
        assert_eq!(g.null_shape(), BetaShape::UNIFORM);
        let j = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<HypothesisGrid>(&j).unwrap(), g);
    }

    #[test]
    fn no_history_gives_flat_marginal() {
        let model = BinomialNpp::new(BinomialData::new(0, 0).unwrap(), BetaShape::UNIFORM).unwrap();
        let y = BinomialData::new(1, 2).unwrap();
        for s in [shape(0.5, 6.0), shape(6.0, 0.5), shape(2.0, 2.0)] {
            let m = log_marginal(&model, &y, s).unwrap();
            assert!(m.converged);
            assert!((m.log_value - (1.0f64 / 3.0).ln()).abs() < 1e-12);
            assert!(log_bf(&model, &y, s).unwrap().value.abs() < 1e-12);
        }
    }

    #[test]
    fn self_comparison_is_exactly_zero() {
        let model = BinomialNpp::new(BinomialData::new(4, 20).unwrap(), BetaShape::UNIFORM).unwrap();
        let y = BinomialData::new(9, 20).unwrap();
        assert_eq!(log_bf(&model, &y, BetaShape::UNIFORM).unwrap().value, 0.0);
    }

    #[test]
    fn concordant_data_favor_heavy_borrowing() {
        let model = BinomialNpp::new(BinomialData::new(4, 20).unwrap(), BetaShape::UNIFORM).unwrap();
        let y = BinomialData::new(4, 20).unwrap();
        let ev = EvidenceCurve::new(model.delta_curve(&y).unwrap());
        let heavy = ev.log_bf(shape(6.0, 0.5)).unwrap().value;
        let light = ev.log_bf(shape(0.5, 6.0)).unwrap().value;
        assert!(heavy > 0.0 && light < 0.0 && heavy > light, "{heavy} {light}");
    }

    #[test]
    fn cached_and_uncached_agree_for_closed_forms() {
        let model = GaussianNpp::new(GaussianEffect::new(0.3, 1.0).unwrap()).unwrap();
        let y = GaussianEffect::new(-0.4, 0.5).unwrap();
        for s in [shape(0.5, 6.0), shape(3.0, 1.5)] {
            let a = log_marginal(&model, &y, s).unwrap().log_value;
            let b = log_marginal_uncached(&model, &y, s).unwrap().log_value;
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn evidence_scale() {
        let ln10 = std::f64::consts::LN_10;
        assert_eq!(classify_evidence(0.5 * ln10).label, EvidenceLabel::Substantial);
        let zero = classify_evidence(0.0);
        assert_eq!((zero.label, zero.direction), (EvidenceLabel::BarelyWorthMentioning, EvidenceDirection::Neutral));
        assert_eq!(classify_evidence(200f64.ln()).label, EvidenceLabel::Decisive);
        let neg = classify_evidence(-1.2 * ln10);
        assert_eq!((neg.label, neg.direction), (EvidenceLabel::Strong, EvidenceDirection::Null));
        assert_eq!(classify_evidence(1.99 * ln10).label, EvidenceLabel::VeryStrong);
        assert_eq!(classify_evidence(0.49 * ln10).label, EvidenceLabel::BarelyWorthMentioning);
    }
}
