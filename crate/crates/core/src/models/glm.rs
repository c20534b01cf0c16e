use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::mcmc::{run_metropolis, MetropolisConfig};
use super::{
    check_delta, check_draw_count, BetaShape, DeltaCurve, DeltaGrid, Family, JointDraw, ModelError, NppModel,
};
use crate::numerics::{
    gauss_hermite, log_gamma, log_sum_exp, newton_maximize, purpose, sample_binomial, sample_poisson, sample_standard_normal, Cholesky, Matrix,
    LocalCubic, MonotoneCubic, NewtonOptions, NewtonResult, NumericsError, RngStream, StreamRng, TwiceDifferentiable,
};

/// Knots of the δ grid on which `g` and `ln C` are tabulated.
pub const GLM_DELTA_GRID_POINTS: usize = 201;

const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    /// Poisson counts.
    Log,
    /// Bernoulli outcomes.
    Logit,
}

/// Outcomes with a full-rank design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmData {
    outcomes: Vec<f64>,
    design: Matrix<f64>,
    link: Link,
    // Σ ln y! for Poisson outcomes, 0 for Bernoulli
    log_factorials: f64,
}

impl GlmData {
    pub fn new(outcomes: Vec<f64>, design: Matrix<f64>, link: Link) -> Result<Self, ModelError> {
        if outcomes.len() != design.rows() {
            return Err(ModelError::InvalidData(format!(
                "{} outcomes for a {}-row design",
                outcomes.len(),
                design.rows()
            )));
        }
        if design.cols() == 0 {
            return Err(ModelError::InvalidData("design has no columns".into()));
        }
        for i in 0..design.rows() {
            if design.row(i).iter().any(|v| !v.is_finite()) {
                return Err(ModelError::InvalidData(format!("non-finite design entry in row {i}")));
            }
        }
        let bad = outcomes.iter().position(|&y| match link {
            Link::Log => !(y >= 0.0 && y.fract() == 0.0 && y.is_finite()),
            Link::Logit => y != 0.0 && y != 1.0,
        });
        if let Some(i) = bad {
            return Err(ModelError::InvalidData(format!(
                "outcome {} at row {i} is outside the {link:?}-link outcome domain",
                outcomes[i]
            )));
        }
        let rank = design.column_rank(RANK_TOLERANCE);
        if rank < design.cols() {
            return Err(ModelError::InvalidData(format!("design has rank {rank} < {} columns", design.cols())));
        }
        let log_factorials = match link {
            Link::Log => outcomes.iter().map(|&y| log_gamma(y + 1.0)).sum(),
            Link::Logit => 0.0,
        };
        Ok(Self { outcomes, design, link, log_factorials })
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn design(&self) -> &Matrix<f64> {
        &self.design
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.design.cols()
    }

    /// Mean response at the linear predictor `eta`.
    fn mean(&self, eta: f64) -> f64 {
        match self.link {
            Link::Log => eta.exp(),
            Link::Logit => logistic(eta),
        }
    }

    pub fn log_likelihood(&self, beta: &[f64]) -> f64 {
        let mut ll = -self.log_factorials;
        for (i, &y) in self.outcomes.iter().enumerate() {
            let eta = dot(self.design.row(i), beta);
            ll += match self.link {
                Link::Log => y * eta - eta.exp(),
                Link::Logit => y * eta - softplus(eta),
            };
        }
        ll
    }

    // adds `w ∇ℓ` and `w ∇²ℓ` into the accumulators
    fn accumulate(&self, beta: &[f64], w: f64, grad: &mut [f64], hess: Option<&mut Matrix<f64>>) {
        let p = self.dim();
        let mut hess = hess;
        for (i, &y) in self.outcomes.iter().enumerate() {
            let x = self.design.row(i);
            let mu = self.mean(dot(x, beta));
            let r = w * (y - mu);
            for a in 0..p {
                grad[a] += r * x[a];
            }
            if let Some(h) = hess.as_deref_mut() {
                let v = w * match self.link {
                    Link::Log => mu,
                    Link::Logit => mu * (1.0 - mu),
                };
                for a in 0..p {
                    for b in a..p {
                        h[(a, b)] -= v * x[a] * x[b];
                    }
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Multivariate normal initial prior on the coefficients.
#[derive(Debug, Clone)]
pub struct GaussianPriorSpec {
    mean: Vec<f64>,
    covariance: Matrix<f64>,
    precision: Matrix<f64>,
    log_norm: f64,
}

impl GaussianPriorSpec {
    pub fn new(mean: Vec<f64>, covariance: Matrix<f64>) -> Result<Self, ModelError> {
        let p = mean.len();
        if covariance.rows() != p || covariance.cols() != p {
            return Err(ModelError::Parameterization(format!("prior mean has {p} entries but covariance is not {p}×{p}")));
        }
        if !covariance.is_symmetric(1e-12) {
            return Err(ModelError::Parameterization("prior covariance is not symmetric".into()));
        }
        let chol = covariance
            .cholesky()
            .map_err(|_| ModelError::Parameterization("prior covariance is not positive definite".into()))?;
        let log_norm = -0.5 * (p as f64 * (2.0 * PI).ln() + chol.log_det());
        Ok(Self { mean, precision: chol.inverse(), covariance, log_norm })
    }

    /// `N(0, sd² I)`.
    pub fn isotropic(dim: usize, sd: f64) -> Result<Self, ModelError> {
        Self::new(vec![0.0; dim], Matrix::from_diagonal(&vec![sd * sd; dim]))
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, beta: &[f64]) -> f64 {
        let d: Vec<f64> = beta.iter().zip(&self.mean).map(|(b, m)| b - m).collect();
        let pd = self.precision.mul_vec(&d);
        self.log_norm - 0.5 * dot(&d, &pd)
    }
}

/// `w₁ ℓ(β|y) + w₀ ℓ(β|y₀) + ln π₀(β)`.
struct Tempered<'a> {
    current: Option<(&'a GlmData, f64)>,
    historical: (&'a GlmData, f64),
    prior: &'a GaussianPriorSpec,
}

impl Tempered<'_> {
    fn parts(&self) -> impl Iterator<Item = (&GlmData, f64)> {
        self.current.into_iter().chain(std::iter::once(self.historical)).filter(|(_, w)| *w != 0.0)
    }
}

impl TwiceDifferentiable<f64> for Tempered<'_> {
    fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn value(&self, beta: &[f64]) -> f64 {
        self.parts().map(|(d, w)| w * d.log_likelihood(beta)).sum::<f64>() + self.prior.log_density(beta)
    }

    fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = beta.iter().zip(&self.prior.mean).map(|(b, m)| b - m).collect();
        let mut g: Vec<f64> = self.prior.precision.mul_vec(&d).into_iter().map(|v| -v).collect();
        for (data, w) in self.parts() {
            data.accumulate(beta, w, &mut g, None);
        }
        g
    }

    fn hessian(&self, beta: &[f64]) -> Matrix<f64> {
        let p = self.dim();
        let mut h = self.prior.precision.scaled(-1.0);
        let mut scratch = vec![0.0; p];
        for (data, w) in self.parts() {
            data.accumulate(beta, w, &mut scratch, Some(&mut h));
        }
        // the likelihood terms went into the upper triangle only
        for a in 0..p {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        h
    }
}

impl Tempered<'_> {
    /// Second-order term of the Laplace expansion at the mode, built from the
    /// third and fourth derivatives of the tempered log-likelihood:
    /// `Σ h⁽⁴⁾SS/8 + Σ h⁽³⁾h⁽³⁾SSS/8 + Σ h⁽³⁾h⁽³⁾SSS/12` with `S = (−H)⁻¹`.
    fn expansion_correction(&self, beta: &[f64], s: &Matrix<f64>) -> f64 {
        let p = beta.len();
        let mut quartic = 0.0;
        let mut a = vec![0.0; p];
        let mut tensor = vec![0.0; p * p * p];
        for (data, w) in self.parts() {
            for i in 0..data.len() {
                let x = data.design.row(i);
                let mu = data.mean(dot(x, beta));
                let (d3, d4) = match data.link {
                    Link::Log => (-mu, -mu),
                    Link::Logit => {
                        let v = mu * (1.0 - mu);
                        (-v * (1.0 - 2.0 * mu), -v * (1.0 - 6.0 * v))
                    }
                };
                let (c, e) = (w * d3, w * d4);
                let sx = s.mul_vec(x);
                let q = dot(x, &sx);
                quartic += e * q * q;
                for j in 0..p {
                    a[j] += c * q * x[j];
                }
                for j in 0..p {
                    for k in 0..p {
                        let cjk = c * x[j] * x[k];
                        for l in 0..p {
                            tensor[(j * p + k) * p + l] += cjk * x[l];
                        }
                    }
                }
            }
        }
        let sa = s.mul_vec(&a);
        let paired = dot(&a, &sa);
        // contract each tensor index with S, then pair with the raw tensor
        let mut t = tensor.clone();
        for axis in 0..3 {
            let mut next = vec![0.0; p * p * p];
            for j in 0..p {
                for k in 0..p {
                    for l in 0..p {
                        let idx = [j, k, l];
                        let mut acc = 0.0;
                        for m in 0..p {
                            let mut src = idx;
                            src[axis] = m;
                            acc += s[(idx[axis], m)] * t[(src[0] * p + src[1]) * p + src[2]];
                        }
                        next[(j * p + k) * p + l] = acc;
                    }
                }
            }
            t = next;
        }
        let crossed: f64 = tensor.iter().zip(&t).map(|(x, y)| x * y).sum();
        quartic / 8.0 + paired / 8.0 + crossed / 12.0
    }
}

/// Laplace estimate of `ln ∫ exp(h)` from a Newton fit, including the
/// second-order expansion term.
fn laplace_value(target: &Tempered<'_>, fit: &NewtonResult<f64>) -> f64 {
    let s = fit.precision.inverse();
    fit.value + 0.5 * fit.mode.len() as f64 * (2.0 * PI).ln() - 0.5 * fit.precision.log_det()
        + target.expansion_correction(&fit.mode, &s)
}

/// GLM with a Gaussian initial prior and one historical study.
#[derive(Debug, Clone)]
pub struct GlmNpp {
    historical: GlmData,
    prior: GaussianPriorSpec,
    grid: Vec<f64>,
    log_c: Vec<f64>,
    log_c_interp: MonotoneCubic<f64>,
}

/// `g` tabulated on the δ grid and interpolated between knots.
#[derive(Debug, Clone)]
pub struct GlmCurve {
    log_g: Vec<f64>,
    modes: Vec<Vec<f64>>,
    interp: LocalCubic<f64>,
}

impl GlmCurve {
    /// Values of `g` at the grid knots.
    pub fn knot_values(&self) -> &[f64] {
        &self.log_g
    }
}

impl DeltaCurve for GlmCurve {
    fn log_g(&self, delta: f64) -> f64 {
        self.interp.eval(knot_coordinate(delta))
    }
}

// Knots are uniform in u = δ^(1/3). The tempered normalizing constant
// changes on a scale of 1/(prior variance · information) near δ = 0, far
// finer than a uniform δ spacing resolves.
fn delta_knots() -> Vec<f64> {
    let last = (GLM_DELTA_GRID_POINTS - 1) as f64;
    (0..GLM_DELTA_GRID_POINTS).map(|i| (i as f64 / last).powi(3)).collect()
}

fn knot_coordinate(delta: f64) -> f64 {
    delta.cbrt()
}

fn knot_coordinates() -> Vec<f64> {
    let last = (GLM_DELTA_GRID_POINTS - 1) as f64;
    (0..GLM_DELTA_GRID_POINTS).map(|i| i as f64 / last).collect()
}

fn nearest_knot(delta: f64) -> usize {
    ((knot_coordinate(delta) * (GLM_DELTA_GRID_POINTS - 1) as f64).round() as usize).min(GLM_DELTA_GRID_POINTS - 1)
}

impl GlmNpp {
    pub fn new(historical: GlmData, prior: GaussianPriorSpec) -> Result<Self, ModelError> {
        if prior.dim() != historical.dim() {
            return Err(ModelError::Parameterization(format!(
                "prior has dimension {} but the design has {} columns",
                prior.dim(),
                historical.dim()
            )));
        }
        let grid = delta_knots();
        let mut log_c = Vec::with_capacity(grid.len());
        let mut start = prior.mean.clone();
        for &d in &grid {
            let lf = fit_norm_const(&historical, &prior, d, &start)?;
            log_c.push(lf.log_integral);
            start = lf.fit.mode;
        }
        let log_c_interp = MonotoneCubic::new(knot_coordinates(), log_c.clone());
        Ok(Self { historical, prior, grid, log_c, log_c_interp })
    }

    pub fn historical(&self) -> &GlmData {
        &self.historical
    }

    pub fn prior(&self) -> &GaussianPriorSpec {
        &self.prior
    }

    /// `ln C` at the grid knots.
    pub fn log_norm_const_knots(&self) -> (&[f64], &[f64]) {
        (&self.grid, &self.log_c)
    }

    /// Interpolated `ln C(δ)`.
    pub fn log_norm_const_interp(&self, delta: f64) -> f64 {
        self.log_c_interp.eval(knot_coordinate(delta))
    }

    fn laplace_numerator(&self, current: &GlmData, delta: f64, start: &[f64]) -> Result<LaplaceFit, ModelError> {
        fit_tempered(Some(current), &self.historical, &self.prior, delta, start)
    }

    /// Mode and precision factor of `β | δ, y, y₀` under the Laplace fit.
    pub fn conditional_laplace(&self, current: &GlmData, delta: f64) -> Result<(Vec<f64>, Cholesky<f64>), ModelError> {
        let lf = self.laplace_numerator(current, delta, &self.prior.mean)?;
        Ok((lf.fit.mode, lf.fit.precision))
    }
}

/// Total node budget for the tensor Gauss–Hermite rule used on `C(δ)`.
const HERMITE_NODE_BUDGET: usize = 5000;
const MAX_HERMITE_ORDER: usize = 40;
// tensor nodes whose weight falls this far below the central one are skipped
const HERMITE_LOG_WEIGHT_CUTOFF: f64 = 36.0;

/// Nodes per axis for a `dim`-dimensional rule, or `None` when the budget
/// allows fewer than three.
fn hermite_order(dim: usize) -> Option<usize> {
    let mut k = MAX_HERMITE_ORDER;
    while k >= 3 {
        if (k as f64).powi(dim as i32) <= HERMITE_NODE_BUDGET as f64 {
            return Some(k);
        }
        k -= 1;
    }
    None
}

/// Adaptive Gauss–Hermite estimate of `ln ∫ exp(h)`, with the rule centred
/// at the mode and scaled by the Cholesky factor of `−H`.
fn adaptive_hermite(target: &Tempered<'_>, fit: &NewtonResult<f64>, order: usize) -> f64 {
    let (z, w) = gauss_hermite(order);
    let lw: Vec<f64> = w.iter().map(|w| w.ln()).collect();
    let central = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let p = fit.mode.len();
    let mut idx = vec![0usize; p];
    let mut terms = Vec::new();
    loop {
        let log_w: f64 = idx.iter().map(|&i| lw[i]).sum();
        if log_w > p as f64 * central - HERMITE_LOG_WEIGHT_CUTOFF {
            let zv: Vec<f64> = idx.iter().map(|&i| z[i]).collect();
            let shift = fit.precision.solve_upper(&zv);
            let beta: Vec<f64> = fit.mode.iter().zip(&shift).map(|(m, s)| m + s).collect();
            let half_sq = 0.5 * dot(&zv, &zv);
            terms.push(log_w + target.value(&beta) + half_sq);
        }
        // odometer over the tensor grid
        let mut axis = 0;
        loop {
            if axis == p {
                let total = log_sum_exp(&terms);
                return total + 0.5 * p as f64 * (2.0 * PI).ln() - 0.5 * fit.precision.log_det();
            }
            idx[axis] += 1;
            if idx[axis] < order {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

struct LaplaceFit {
    fit: NewtonResult<f64>,
    log_integral: f64,
}

/// `ln C(δ)`: the integrand carries only the tempered historical likelihood,
/// which for small δ is too weak for the Laplace expansion, so a
/// Gauss–Hermite rule refines it when the dimension allows.
fn fit_norm_const(
    historical: &GlmData,
    prior: &GaussianPriorSpec,
    delta: f64,
    start: &[f64],
) -> Result<LaplaceFit, ModelError> {
    let mut lf = fit_tempered(None, historical, prior, delta, start)?;
    if let Some(order) = hermite_order(prior.dim()) {
        let target = Tempered { current: None, historical: (historical, delta), prior };
        let v = adaptive_hermite(&target, &lf.fit, order);
        if !v.is_finite() {
            return Err(NumericsError::Domain(format!("quadrature value {v} for C({delta})")).into());
        }
        lf.log_integral = v;
    }
    Ok(lf)
}

fn fit_tempered(
    current: Option<&GlmData>,
    historical: &GlmData,
    prior: &GaussianPriorSpec,
    delta: f64,
    start: &[f64],
) -> Result<LaplaceFit, ModelError> {
    let target = Tempered { current: current.map(|c| (c, 1.0)), historical: (historical, delta), prior };
    let fit = newton_maximize(&target, start, &NewtonOptions::default())
        .map_err(|source| ModelError::Optimization { delta, source })?;
    let log_integral = laplace_value(&target, &fit);
    if !log_integral.is_finite() {
        return Err(NumericsError::Domain(format!("Laplace value {log_integral} at δ = {delta}")).into());
    }
    Ok(LaplaceFit { fit, log_integral })
}

fn log_sigmoid(u: f64) -> f64 {
    -softplus(-u)
}

impl NppModel for GlmNpp {
    type Data = GlmData;
    type Param = Vec<f64>;
    type Curve = GlmCurve;

    fn family(&self) -> Family {
        match self.historical.link {
            Link::Log => Family::PoissonGlm,
            Link::Logit => Family::LogisticGlm,
        }
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.prior.dim()).map(|j| format!("beta{j}")).collect()
    }

    fn validate_current(&self, current: &GlmData) -> Result<(), ModelError> {
        if current.dim() != self.historical.dim() {
            return Err(ModelError::InvalidData(format!(
                "current design has {} columns, historical {}",
                current.dim(),
                self.historical.dim()
            )));
        }
        if current.link != self.historical.link {
            return Err(ModelError::InvalidData("current and historical links differ".into()));
        }
        Ok(())
    }

    fn log_conditional_marginal(&self, current: &GlmData, delta: f64) -> Result<f64, ModelError> {
        check_delta(delta)?;
        self.validate_current(current)?;
        let num = self.laplace_numerator(current, delta, &self.prior.mean)?.log_integral;
        Ok(num - self.log_norm_const(delta)?)
    }

    fn log_norm_const(&self, delta: f64) -> Result<f64, ModelError> {
        check_delta(delta)?;
        Ok(fit_norm_const(&self.historical, &self.prior, delta, &self.prior.mean)?.log_integral)
    }

    fn delta_curve(&self, current: &GlmData) -> Result<GlmCurve, ModelError> {
        self.validate_current(current)?;
        let mut log_g = Vec::with_capacity(self.grid.len());
        let mut modes = Vec::with_capacity(self.grid.len());
        let mut start = self.prior.mean.clone();
        for (&d, &lc) in self.grid.iter().zip(&self.log_c) {
            let lf = self.laplace_numerator(current, d, &start)?;
            log_g.push(lf.log_integral - lc);
            start = lf.fit.mode.clone();
            modes.push(lf.fit.mode);
        }
        let interp = LocalCubic::new(knot_coordinates(), log_g.clone());
        Ok(GlmCurve { log_g, modes, interp })
    }

    fn sample_joint_posterior(
        &self,
        current: &GlmData,
        curve: &GlmCurve,
        delta_prior: BetaShape,
        n_draws: usize,
        stream: &RngStream,
    ) -> Result<Vec<JointDraw<Vec<f64>>>, ModelError> {
        check_draw_count(n_draws)?;
        self.validate_current(current)?;
        let p = self.prior.dim();
        let (eta, nu) = (delta_prior.eta(), delta_prior.nu());
        let lb = delta_prior.log_beta();

        // Laplace picture of the joint posterior seeds the chains and the proposal
        let grid = DeltaGrid::new(curve, delta_prior, 0.0)?;
        let d_mean = grid.mean();
        let center = self.laplace_numerator(current, d_mean, &curve.modes[nearest_knot(d_mean)])?.fit;
        let beta_cov = center.precision.inverse();
        let (mut mu, mut m2) = (0.0, 0.0);
        for (i, &pr) in grid.probabilities().iter().enumerate() {
            let (l, r) = grid.cell(i);
            let u = logit(0.5 * (l + r));
            mu += pr * u;
            m2 += pr * u * u;
        }
        let u_var = (m2 - mu * mu).max(1e-4);
        let mut cov = Matrix::zeros(p + 1, p + 1);
        for a in 0..p {
            for b in 0..p {
                cov[(a, b)] = beta_cov[(a, b)];
            }
        }
        cov[(p, p)] = u_var;

        let log_target = |x: &[f64]| -> f64 {
            let u = x[p];
            let (ld, l1d) = (log_sigmoid(u), log_sigmoid(-u));
            let delta = ld.exp();
            let beta = &x[..p];
            current.log_likelihood(beta) + delta * self.historical.log_likelihood(beta) + self.prior.log_density(beta)
                - self.log_c_interp.eval(knot_coordinate(delta))
                + eta * ld
                + nu * l1d
                - lb
        };
        let init = |rng: &mut StreamRng| -> Vec<f64> {
            let delta = grid.sample(rng).clamp(1e-9, 1.0 - 1e-9);
            let k = nearest_knot(delta);
            let z: Vec<f64> = (0..p).map(|_| sample_standard_normal(rng)).collect();
            let (mode, chol) = match self.laplace_numerator(current, delta, &curve.modes[k]) {
                Ok(lf) => (lf.fit.mode, lf.fit.precision),
                Err(_) => (curve.modes[k].clone(), center.precision.clone()),
            };
            // β = mode + L⁻ᵀ z has covariance (L Lᵀ)⁻¹
            let shift = chol.solve_upper(&z);
            let mut x: Vec<f64> = mode.iter().zip(&shift).map(|(m, s)| m + s).collect();
            x.push(logit(delta));
            x
        };
        let cfg = MetropolisConfig::for_total_draws(n_draws);
        let seed = RngStream::new(stream.derived_seed(), [0, 0, purpose::JOINT_DRAWS]).derived_seed();
        let out = run_metropolis(&log_target, &init, &cov, &cfg, seed)?;
        Ok(out
            .draws
            .into_iter()
            .take(n_draws)
            .map(|mut x| {
                let u = x.pop().expect("δ coordinate");
                JointDraw { theta: x, delta: log_sigmoid(u).exp() }
            })
            .collect())
    }

    fn simulate(&self, beta: &Vec<f64>, template: &GlmData, rng: &mut StreamRng) -> Result<GlmData, ModelError> {
        if beta.len() != template.dim() {
            return Err(NumericsError::Dimension(format!("β has {} entries, design {}", beta.len(), template.dim())).into());
        }
        let mut outcomes = Vec::with_capacity(template.len());
        let mut log_factorials = 0.0;
        for i in 0..template.len() {
            let mu = template.mean(dot(template.design.row(i), beta));
            let y = match template.link {
                Link::Log => {
                    if !mu.is_finite() {
                        return Err(NumericsError::Domain(format!("Poisson rate {mu} at row {i}")).into());
                    }
                    let y = sample_poisson(rng, mu)? as f64;
                    log_factorials += log_gamma(y + 1.0);
                    y
                }
                Link::Logit => sample_binomial(rng, 1, mu)? as f64,
            };
            outcomes.push(y);
        }
        Ok(GlmData { outcomes, design: template.design.clone(), link: template.link, log_factorials })
    }
}

fn logit(d: f64) -> f64 {
    (d / (1.0 - d)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intercept_only(ys: &[f64], link: Link) -> GlmData {
        GlmData::new(ys.to_vec(), Matrix::from_rows(&vec![vec![1.0]; ys.len()]).unwrap(), link).unwrap()
    }

    // ∫ exp(value(β)) dβ for one coefficient by a fine trapezoid rule
    fn grid_log_integral(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let vals: Vec<f64> = (0..=n).map(|i| f(lo + i as f64 * h)).collect();
        let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = vals.iter().enumerate().map(|(i, v)| (v - m).exp() * if i == 0 || i == n { 0.5 } else { 1.0 }).sum();
        m + (s * h).ln()
    }

    #[test]
    fn validates_outcomes_and_rank() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(GlmData::new(vec![1.0, 2.0], x, Link::Log).is_err());
        let x = Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        assert!(GlmData::new(vec![1.0, 2.0], x.clone(), Link::Logit).is_err());
        assert!(GlmData::new(vec![1.5, 2.0], x.clone(), Link::Log).is_err());
        assert!(GlmData::new(vec![-1.0, 2.0], x.clone(), Link::Log).is_err());
        assert!(GlmData::new(vec![1.0], x, Link::Log).is_err());
    }

    #[test]
    fn poisson_intercept_mode() {
        let d = intercept_only(&[1.0, 2.0], Link::Log);
        let prior = GaussianPriorSpec::isotropic(1, 10.0).unwrap();
        let fit = fit_tempered(None, &d, &prior, 1.0, &[0.0]).unwrap().fit;
        // grid search on the log posterior
        let f = |b: f64| d.log_likelihood(&[b]) + prior.log_density(&[b]);
        let best = (0..200_001).map(|i| -1.0 + i as f64 * 1e-5).max_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
        assert!((fit.mode[0] - best).abs() < 1e-4);
        // the N(0, 10²) prior pulls the mode about 1.3e-3 below ln 1.5
        assert!((fit.mode[0] - 1.5f64.ln()).abs() < 2e-3);
    }

    #[test]
    fn laplace_norm_const_matches_grid() {
        let d = intercept_only(&[1.0, 2.0], Link::Log);
        let prior = GaussianPriorSpec::isotropic(1, 10.0).unwrap();
        let m = GlmNpp::new(d.clone(), prior.clone()).unwrap();
        assert!(m.log_norm_const(0.0).unwrap().abs() < 1e-12);
        let want = grid_log_integral(|b| d.log_likelihood(&[b]) + prior.log_density(&[b]), -40.0, 40.0);
        assert!((m.log_norm_const(1.0).unwrap() - want).abs() < 1e-3);
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let x = Matrix::from_rows(&[vec![1.0, 0.3], vec![1.0, -1.2], vec![1.0, 0.8], vec![1.0, 2.0]]).unwrap();
        let cur = GlmData::new(vec![0.0, 1.0, 1.0, 0.0], x.clone(), Link::Logit).unwrap();
        let hist = GlmData::new(vec![1.0, 1.0, 0.0, 1.0], x, Link::Logit).unwrap();
        let prior = GaussianPriorSpec::new(vec![0.1, -0.2], Matrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 2.0]]).unwrap())
            .unwrap();
        let t = Tempered { current: Some((&cur, 1.0)), historical: (&hist, 0.4), prior: &prior };
        let b = [0.3, -0.7];
        let g = t.gradient(&b);
        let h = t.hessian(&b);
        let eps = 1e-6;
        for j in 0..2 {
            let mut up = b;
            let mut dn = b;
            up[j] += eps;
            dn[j] -= eps;
            assert!(((t.value(&up) - t.value(&dn)) / (2.0 * eps) - g[j]).abs() < 1e-6);
            let (gu, gd) = (t.gradient(&up), t.gradient(&dn));
            for k in 0..2 {
                assert!(((gu[k] - gd[k]) / (2.0 * eps) - h[(k, j)]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn curve_matches_direct_evaluation_at_knots() {
        let x = Matrix::from_rows(&(0..30).map(|i| vec![1.0, (i as f64 - 15.0) / 10.0]).collect::<Vec<_>>()).unwrap();
        let ys: Vec<f64> = (0..30).map(|i| ((i * 7) % 5) as f64).collect();
        let cur = GlmData::new(ys.clone(), x.clone(), Link::Log).unwrap();
        let hist = GlmData::new(ys.iter().map(|y| (y + 1.0) % 4.0).collect(), x, Link::Log).unwrap();
        let m = GlmNpp::new(hist, GaussianPriorSpec::isotropic(2, 10.0).unwrap()).unwrap();
        let c = m.delta_curve(&cur).unwrap();
        for &d in &[0.0, 0.25, 0.5, 1.0] {
            let direct = m.log_conditional_marginal(&cur, d).unwrap();
            assert!((c.log_g(d) - direct).abs() < 1e-9, "δ={d}");
        }
    }

    #[test]
    fn replicate_means_follow_the_rate() {
        let x = Matrix::from_rows(&(0..4).map(|i| vec![1.0, i as f64 / 4.0]).collect::<Vec<_>>()).unwrap();
        let template = GlmData::new(vec![0.0; 4], x, Link::Log).unwrap();
        let m = GlmNpp::new(template.clone(), GaussianPriorSpec::isotropic(2, 10.0).unwrap()).unwrap();
        let beta = vec![0.5, 1.0];
        let mut rng = RngStream::new(11, [0, 0, purpose::TEST]).rng();
        let k = 20_000;
        let mut sums = [0.0; 4];
        for _ in 0..k {
            let r = m.simulate(&beta, &template, &mut rng).unwrap();
            for (s, y) in sums.iter_mut().zip(r.outcomes()) {
                *s += y;
            }
        }
        for (i, s) in sums.iter().enumerate() {
            let rate = (0.5 + i as f64 / 4.0).exp();
            let se = (rate / k as f64).sqrt();
            assert!((s / k as f64 - rate).abs() < 3.0 * se, "row {i}");
        }
    }
}
