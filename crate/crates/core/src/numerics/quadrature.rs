//! Composite Gauss–Legendre rules on the unit interval.
//!
//! The panels live in an auxiliary variable `t ∈ (0, 1)` mapped to the
//! integration variable by `x = sin²(πt/2)`. Near either endpoint the map
//! behaves like `x ~ t²`, so a factor `x^(a-1)` in the integrand becomes
//! `t^(2a-1)` after the Jacobian. For the half-integer Beta shapes the
//! calibration grid uses this is a polynomial, and the rule converges at
//! the usual Gauss–Legendre rate despite the endpoint singularity. Every
//! node is strictly interior.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::special::log_sum_exp;
use super::{NumericsError, Real};

/// Gauss–Legendre points per panel.
pub const POINTS_PER_PANEL: usize = 16;
/// Node budget for refinement; no rule above this size is ever built.
pub const MAX_NODES: usize = 2048;
const START_PANELS: usize = 2;

/// Gauss–Legendre nodes and weights on [-1, 1], by Newton on the
/// three-term recurrence.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss–Hermite rule for the standard normal weight: `Σ wᵢ f(xᵢ) ≈ E f(Z)`
/// with `Z ~ N(0, 1)`. Weights sum to 1.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    // roots of the physicists' polynomials by Newton on the orthonormal recurrence
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PI.powf(-0.25);
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let scale = std::f64::consts::SQRT_2;
    let norm = PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = x.iter().zip(&w).map(|(&x, &w)| (x * scale, w / norm)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn reference_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(POINTS_PER_PANEL))
}

/// Quadrature rule for `∫₀¹ f(x) dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
    log_weights: Vec<T>,
    log_nodes: Vec<T>,
    log_complements: Vec<T>,
    panel_count: usize,
}

impl<T: Real> QuadratureRule<T> {
    /// Rule with `panel_count` panels of [`POINTS_PER_PANEL`] points.
    pub fn unit(panel_count: usize) -> Self {
        assert!(panel_count > 0, "panel_count must be positive");
        let (gx, gw) = reference_rule();
        let n = panel_count * POINTS_PER_PANEL;
        let h = 1.0 / panel_count as f64;
        // (t, 1 - t) pairs, both computed without cancellation.
        let mut pairs = Vec::with_capacity(n);
        let mut pw = Vec::with_capacity(n);
        for panel in 0..panel_count {
            let left = panel as f64 * h;
            for (x, w) in gx.iter().zip(gw) {
                pairs.push(left + 0.5 * h * (1.0 + x));
                pw.push(0.5 * h * w);
            }
        }
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut log_weights = Vec::with_capacity(n);
        let mut log_nodes = Vec::with_capacity(n);
        let mut log_complements = Vec::with_capacity(n);
        for j in 0..n {
            // The rule is symmetric: the mirror of node j is node n-1-j.
            let (t, s) = if j < n / 2 {
                (pairs[j], 1.0 - pairs[j])
            } else {
                (1.0 - pairs[n - 1 - j], pairs[n - 1 - j])
            };
            let sin_t = (0.5 * PI * t).sin();
            let sin_s = (0.5 * PI * s).sin();
            let x = sin_t * sin_t;
            let jac = PI * sin_t * sin_s;
            let w = pw[j] * jac;
            nodes.push(T::lit(x));
            weights.push(T::lit(w));
            log_weights.push(T::lit(w.ln()));
            log_nodes.push(T::lit(2.0 * sin_t.ln()));
            log_complements.push(T::lit(2.0 * sin_s.ln()));
        }
        Self { nodes, weights, log_weights, log_nodes, log_complements, panel_count }
    }

    /// Smallest rule of the refinement sequence.
    pub fn coarsest() -> Self {
        Self::unit(START_PANELS)
    }

    /// Rule with twice as many panels.
    pub fn refined(&self) -> Self {
        Self::unit(self.panel_count * 2)
    }

    pub fn panel_count(&self) -> usize {
        self.panel_count
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[T] {
        &self.log_weights
    }

    /// `ln x` at every node, accurate near 0.
    pub fn log_nodes(&self) -> &[T] {
        &self.log_nodes
    }

    /// `ln(1 - x)` at every node, accurate near 1.
    pub fn log_complements(&self) -> &[T] {
        &self.log_complements
    }

    /// `ln Σ w_j exp(values_j)` for integrand log-values at the nodes.
    pub fn log_apply(&self, log_values: &[T]) -> T {
        debug_assert_eq!(log_values.len(), self.len());
        let terms: Vec<T> = self.log_weights.iter().zip(log_values).map(|(&w, &v)| w + v).collect();
        log_sum_exp(&terms)
    }

    /// Log Beta(a, b) density at every node.
    pub fn log_beta_density(&self, a: T, b: T, log_beta_ab: T) -> Vec<T> {
        let one = T::one();
        self.log_nodes
            .iter()
            .zip(&self.log_complements)
            .map(|(&ln_x, &ln_1mx)| (a - one) * ln_x + (b - one) * ln_1mx - log_beta_ab)
            .collect()
    }
}

/// Outcome of an adaptive log-domain integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitIntegral<T> {
    /// `ln ∫₀¹ exp(f(x)) dx`.
    pub log_value: T,
    /// Node count of the last rule used.
    pub nodes_used: usize,
    /// False when the node cap was reached before the tolerance was met.
    pub converged: bool,
}

/// Absolute log tolerance for successive refinements.
pub(crate) fn log_tolerance<T: Real>() -> T {
    T::lit(1e-8).max(T::epsilon() * T::lit(1e3))
}

/// Two successive estimates agree (both `-inf` counts as agreement).
pub(crate) fn estimates_agree<T: Real>(prev: T, next: T, tol: T) -> bool {
    if prev == next {
        return true;
    }
    (next - prev).abs() < tol
}

/// `ln ∫₀¹ exp(f_log(x)) dx`, starting at `rule` and doubling the panel
/// count until successive estimates differ by less than `1e-8` or the
/// [`MAX_NODES`] cap is reached.
///
/// `f_log` may return `-inf` (a zero integrand); NaN or `+inf` is an error.
pub fn integrate_unit_log<T, F>(f_log: F, rule: &QuadratureRule<T>) -> Result<UnitIntegral<T>, NumericsError>
where
    T: Real,
    F: Fn(T) -> T,
{
    let tol = log_tolerance::<T>();
    let eval = |rule: &QuadratureRule<T>| -> Result<T, NumericsError> {
        let mut values = Vec::with_capacity(rule.len());
        for &x in rule.nodes() {
            let v = f_log(x);
            if v.is_nan() || v == T::infinity() {
                return Err(NumericsError::NonFiniteIntegrand {
                    node: x.to_f64().unwrap_or(f64::NAN),
                    value: v.to_f64().unwrap_or(f64::NAN),
                });
            }
            values.push(v);
        }
        Ok(rule.log_apply(&values))
    };

    let mut current = rule.clone();
    let mut estimate = eval(&current)?;
    while current.len() * 2 <= MAX_NODES {
        let next = current.refined();
        let next_estimate = eval(&next)?;
        let done = estimates_agree(estimate, next_estimate, tol);
        current = next;
        estimate = next_estimate;
        if done {
            return Ok(UnitIntegral { log_value: estimate, nodes_used: current.len(), converged: true });
        }
    }
    Ok(UnitIntegral { log_value: estimate, nodes_used: current.len(), converged: false })
}

/// The full refinement sequence, from [`QuadratureRule::coarsest`] up to
/// [`MAX_NODES`] nodes. Shared by every cached evaluation of the δ-integrals.
#[derive(Debug)]
pub struct RuleLadder<T> {
    rungs: Vec<QuadratureRule<T>>,
}

impl<T: Real> RuleLadder<T> {
    pub fn new() -> Self {
        let mut rungs = vec![QuadratureRule::<T>::coarsest()];
        while rungs.last().map(|r| r.len() * 2 <= MAX_NODES).unwrap_or(false) {
            let next = rungs.last().unwrap().refined();
            rungs.push(next);
        }
        Self { rungs }
    }

    pub fn rungs(&self) -> &[QuadratureRule<T>] {
        &self.rungs
    }
}

impl<T: Real> Default for RuleLadder<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl RuleLadder<f64> {
    /// Process-wide `f64` ladder.
    pub fn shared() -> &'static RuleLadder<f64> {
        static LADDER: OnceLock<RuleLadder<f64>> = OnceLock::new();
        LADDER.get_or_init(RuleLadder::new)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::special::log_beta_density;

    #[test]
    fn gauss_hermite_reproduces_normal_moments() {
        for n in [1, 2, 5, 12, 40] {
            let (x, w) = gauss_hermite(n);
            let m = |k: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum::<f64>();
            assert!((m(0) - 1.0).abs() < 1e-13, "n={n}");
            assert!(m(1).abs() < 1e-13);
            if n >= 2 {
                assert!((m(2) - 1.0).abs() < 1e-12);
            }
            if n >= 5 {
                assert!((m(4) - 3.0).abs() < 1e-11);
                assert!((m(8) - 105.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(POINTS_PER_PANEL);
        // degree 30 monomial: ∫_{-1}^{1} x^30 = 2/31
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((v - 2.0 / 31.0).abs() < 1e-14);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rule_invariants() {
        for panels in [1, 2, 8, 128] {
            let r = QuadratureRule::<f64>::unit(panels);
            assert_eq!(r.len(), panels * POINTS_PER_PANEL);
            assert!(r.nodes().iter().all(|&x| x > 0.0 && x < 1.0));
            assert!(r.nodes().windows(2).all(|w| w[0] < w[1]));
            assert!(r.weights().iter().all(|&w| w > 0.0));
            let total: f64 = r.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "{panels}: {total}");
            for ((&x, &lx), &l1) in r.nodes().iter().zip(r.log_nodes()).zip(r.log_complements()) {
                assert!((lx - x.ln()).abs() < 1e-12 * lx.abs().max(1.0));
                assert!((l1.exp() - (1.0 - x)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn integrates_beta_densities() {
        let rule = QuadratureRule::<f64>::coarsest();
        let r = integrate_unit_log(|x| log_beta_density(x, 2.0, 2.0), &rule).unwrap();
        assert!(r.converged);
        assert!(r.log_value.abs() < 1e-12);
        let r = integrate_unit_log(|x| log_beta_density(x, 0.5, 6.0), &rule).unwrap();
        assert!(r.log_value.abs() < 1e-6, "{:?}", r);
        let r = integrate_unit_log(|x: f64| x.ln(), &rule).unwrap();
        assert!((r.log_value - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let rule = QuadratureRule::<f64>::coarsest();
        let err = integrate_unit_log(|x| if x > 0.5 { f64::NAN } else { 0.0 }, &rule).unwrap_err();
        match err {
            NumericsError::NonFiniteIntegrand { node, .. } => assert!(node > 0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rough_integrand_hits_the_cap() {
        // A kink and a near-discontinuity keep successive estimates apart.
        let rule = QuadratureRule::<f64>::coarsest();
        let r = integrate_unit_log(|x: f64| if x < 0.3 { 0.0 } else { -40.0 * (x - 0.3).sqrt() }, &rule).unwrap();
        assert_eq!(r.nodes_used, MAX_NODES);
        assert!(!r.converged);
    }

    #[test]
    fn works_in_single_precision() {
        let rule = QuadratureRule::<f32>::coarsest();
        let r = integrate_unit_log(|x: f32| x.ln(), &rule).unwrap();
        assert!((r.log_value - 0.5f32.ln()).abs() < 1e-5);
    }

    #[test]
    fn ladder_matches_refinement() {
        let ladder = RuleLadder::<f64>::new();
        assert_eq!(ladder.rungs().first().unwrap().len(), START_PANELS * POINTS_PER_PANEL);
        assert_eq!(ladder.rungs().last().unwrap().len(), MAX_NODES);
        for w in ladder.rungs().windows(2) {
            assert_eq!(w[0].refined(), w[1]);
        }
    }
}
