//! Scenario sweeps: a historical dataset and current datasets that drift
//! away from it, with the calibrated prior, the uniform prior and the
//! mixture comparators fitted at every level and replication.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta as BetaDist, ContinuousCDF};
use thiserror::Error;

use crate::baselines::{build_rmap, build_sam, mixture_posterior, Conjugate, Endpoint, DEFAULT_BINOMIAL_CSD};
use crate::bayesfactor::HypothesisGrid;
use crate::cbf::{
    build_default_grid, run_cbf, CbfConfig, CbfError, DEFAULT_HPDI_MASS, DEFAULT_JOINT_DRAWS, DEFAULT_REPLICATES,
    MAX_FAILURE_SHARE,
};
use crate::models::{
    BetaShape, BinomialData, BinomialNpp, GaussianEffect, GaussianNpp, GaussianPriorSpec, GlmData, GlmNpp, Link,
    ModelError, NppModel, PosteriorSummary, ScalarParams,
};
use crate::numerics::{purpose, sample_standard_normal, Matrix, RngStream};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Spec(String),
    #[error("{failed} of {total} sweep cells failed (first: {first})")]
    TooManyFailures { failed: usize, total: usize, first: String },
    #[error("nothing to emit: the sweep has no rows")]
    Empty,
    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SimError + '_ {
    move |source| SimError::Io { path: path.to_path_buf(), source }
}

/// Data generator and the meaning of a disagreement level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScenarioFamily {
    /// Historical `y₀ = round(θ₀ N₀)`; current `y = y₀ + level`.
    Binomial {
        #[serde(default = "default_trials")]
        historical_trials: u64,
        #[serde(default = "default_trials")]
        current_trials: u64,
        #[serde(default = "default_theta0")]
        theta0: f64,
        /// Initial Beta prior on θ, also the vague mixture component.
        #[serde(default = "uniform_pair")]
        theta_prior: (f64, f64),
        #[serde(default = "default_csd")]
        csd: f64,
    },
    /// Historical estimate `μ₀`. The current estimate is drawn from
    /// `N(μ₀ + level, current_variance)`, with the same standard normal
    /// noise at every level of a replication.
    Gaussian {
        #[serde(default)]
        historical_mean: f64,
        #[serde(default = "one")]
        historical_variance: f64,
        #[serde(default = "one")]
        current_variance: f64,
        /// Variance of the vague normal mixture component (mean 0).
        #[serde(default = "default_vague_variance")]
        vague_variance: f64,
        /// Defaults to one historical standard deviation.
        #[serde(default)]
        csd: Option<f64>,
    },
    /// Poisson log-linear data with standard normal covariates fixed per
    /// sweep; the current coefficient `β₁` is `historical β₁ + level`.
    PoissonGlm {
        #[serde(default = "default_trials")]
        historical_rows: u64,
        #[serde(default = "default_trials")]
        current_rows: u64,
        /// Intercept first.
        #[serde(default = "default_coefficients")]
        coefficients: Vec<f64>,
        #[serde(default = "default_prior_sd")]
        prior_sd: f64,
    },
}

fn default_trials() -> u64 {
    100
}
fn default_theta0() -> f64 {
    0.2
}
fn uniform_pair() -> (f64, f64) {
    (1.0, 1.0)
}
fn default_csd() -> f64 {
    DEFAULT_BINOMIAL_CSD
}
fn one() -> f64 {
    1.0
}
fn default_vague_variance() -> f64 {
    100.0
}
fn default_coefficients() -> Vec<f64> {
    vec![0.5, 0.3, 0.3, 0.3]
}
fn default_prior_sd() -> f64 {
    10.0
}

/// Calibration settings shared by every sweep cell; the seed comes from the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CbfSettings {
    #[serde(default)]
    pub grid: Option<Vec<BetaShape>>,
    #[serde(default = "default_k")]
    pub k_replicates: usize,
    #[serde(default = "default_mass")]
    pub hpdi_mass: f64,
    #[serde(default = "default_draws")]
    pub joint_draws: usize,
}

fn default_k() -> usize {
    DEFAULT_REPLICATES
}
fn default_mass() -> f64 {
    DEFAULT_HPDI_MASS
}
fn default_draws() -> usize {
    DEFAULT_JOINT_DRAWS
}

impl Default for CbfSettings {
    fn default() -> Self {
        Self { grid: None, k_replicates: DEFAULT_REPLICATES, hpdi_mass: DEFAULT_HPDI_MASS, joint_draws: DEFAULT_JOINT_DRAWS }
    }
}

impl CbfSettings {
    pub fn grid(&self) -> Result<HypothesisGrid, ModelError> {
        match &self.grid {
            Some(g) => HypothesisGrid::new(g.clone()),
            None => Ok(build_default_grid()),
        }
    }

    pub fn config(&self, root_seed: u64) -> Result<CbfConfig, CbfError> {
        let mut cfg = CbfConfig::new(self.grid()?, root_seed);
        cfg.k_replicates = self.k_replicates;
        cfg.hpdi_mass = self.hpdi_mass;
        cfg.joint_draws = self.joint_draws;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub name: String,
    pub scenario: ScenarioFamily,
    /// Strictly increasing disagreement levels.
    pub levels: Vec<f64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub cbf: CbfSettings,
    /// Weight on the vague RMAP component.
    #[serde(default = "half")]
    pub rmap_omega: f64,
    /// Posterior draws per NPP summary.
    #[serde(default = "default_draws")]
    pub summary_draws: usize,
}

fn default_replications() -> usize {
    20
}
fn half() -> f64 {
    0.5
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Spec(m));
        if self.levels.is_empty() {
            return bad("no disagreement levels".into());
        }
        if self.levels.iter().any(|l| !l.is_finite()) || self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return bad("disagreement levels must be finite and strictly increasing".into());
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.rmap_omega) {
            return bad(format!("rmap_omega {} outside [0, 1]", self.rmap_omega));
        }
        if self.summary_draws < crate::models::MIN_JOINT_DRAWS.max(10) {
            return bad(format!("summary_draws {} is too small", self.summary_draws));
        }
        self.cbf.config(0).map_err(|e| SimError::Spec(e.to_string()))?;
        match &self.scenario {
            ScenarioFamily::Binomial { historical_trials, current_trials, theta0, theta_prior, csd } => {
                if !(0.0..=1.0).contains(theta0) {
                    return bad(format!("theta0 {theta0} outside [0, 1]"));
                }
                BetaShape::new(theta_prior.0, theta_prior.1).map_err(|e| SimError::Spec(e.to_string()))?;
                if !(*csd > 0.0) {
                    return bad("csd must be positive".into());
                }
                let y0 = (theta0 * *historical_trials as f64).round();
                for l in &self.levels {
                    let y = y0 + l;
                    if l.fract() != 0.0 || y < 0.0 || y > *current_trials as f64 {
                        return bad(format!("level {l} gives an invalid current count out of {current_trials}"));
                    }
                }
            }
            ScenarioFamily::Gaussian { historical_mean, historical_variance, current_variance, vague_variance, csd } => {
                GaussianEffect::new(*historical_mean, *historical_variance).map_err(|e| SimError::Spec(e.to_string()))?;
                GaussianEffect::new(0.0, *current_variance).map_err(|e| SimError::Spec(e.to_string()))?;
                if !(*vague_variance > 0.0) || csd.is_some_and(|c| !(c > 0.0)) {
                    return bad("vague_variance and csd must be positive".into());
                }
            }
            ScenarioFamily::PoissonGlm { historical_rows, current_rows, coefficients, prior_sd } => {
                if coefficients.len() < 2 {
                    return bad("need an intercept and at least one covariate coefficient".into());
                }
                if (*historical_rows as usize) < coefficients.len() || (*current_rows as usize) < coefficients.len() {
                    return bad("fewer rows than coefficients".into());
                }
                if !(*prior_sd > 0.0) {
                    return bad("prior_sd must be positive".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    CbfNpp,
    UniformNpp,
    Rmap,
    Sam,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::CbfNpp, Method::UniformNpp, Method::Rmap, Method::Sam];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::CbfNpp => "cbf-npp",
            Method::UniformNpp => "uniform-npp",
            Method::Rmap => "rmap",
            Method::Sam => "sam",
        }
    }
}

/// One row per (level, replication, method).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub level: f64,
    pub replication: usize,
    pub method: Method,
    pub selected_eta: f64,
    pub selected_nu: f64,
    pub param_mean: f64,
    pub param_sd: f64,
    pub param_hpdi_lo: f64,
    pub param_hpdi_hi: f64,
    /// Empty for the mixture comparators, which have no δ.
    pub delta_mean: Option<f64>,
    pub delta_sd: Option<f64>,
}

/// The calibrated prior chosen in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSelection {
    pub level: f64,
    pub replication: usize,
    pub selected: BetaShape,
    pub fell_back_to_null: bool,
    pub prior_mean: f64,
    pub prior_q25: f64,
    pub prior_median: f64,
    pub prior_q75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub level: f64,
    pub replication: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub levels: Vec<f64>,
    pub rows: Vec<SweepRow>,
    pub selections: Vec<CellSelection>,
    pub failures: Vec<CellFailure>,
}

impl SweepResult {
    /// Selected-prior means `E[δ]` at level index `i`, in replication order.
    pub fn selected_means(&self, level: f64) -> Vec<f64> {
        self.selections.iter().filter(|s| s.level == level).map(|s| s.prior_mean).collect()
    }

    /// Rows of one method at one level, in replication order.
    pub fn rows_for(&self, level: f64, method: Method) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.level == level && r.method == method).collect()
    }
}

fn beta_quartiles(shape: BetaShape) -> (f64, f64, f64) {
    let d = BetaDist::new(shape.eta(), shape.nu()).expect("validated shape");
    (d.inverse_cdf(0.25), d.inverse_cdf(0.5), d.inverse_cdf(0.75))
}

struct CellOutput {
    selection: CellSelection,
    rows: Vec<SweepRow>,
}

fn npp_row<M: NppModel>(
    model: &M,
    current: &M::Data,
    shape: BetaShape,
    draws: usize,
    target: usize,
    stream: &RngStream,
) -> Result<(PosteriorSummary, PosteriorSummary), ModelError> {
    let curve = model.delta_curve(current)?;
    let joint = model.sample_joint_posterior(current, &curve, shape, draws, stream)?;
    let theta = PosteriorSummary::from_draws("param", joint.iter().map(|d| d.theta.scalars()[target]).collect())?;
    let delta = PosteriorSummary::from_draws("delta", joint.iter().map(|d| d.delta).collect())?;
    Ok((theta, delta))
}

fn row(level: f64, replication: usize, method: Method, selected: BetaShape, p: &PosteriorSummary, d: Option<&PosteriorSummary>) -> SweepRow {
    SweepRow {
        level,
        replication,
        method,
        selected_eta: selected.eta(),
        selected_nu: selected.nu(),
        param_mean: p.mean,
        param_sd: p.sd,
        param_hpdi_lo: p.hpdi.lower,
        param_hpdi_hi: p.hpdi.upper,
        delta_mean: d.map(|d| d.mean),
        delta_sd: d.map(|d| d.sd),
    }
}

#[allow(clippy::too_many_arguments)]
fn fit_cell<M: NppModel>(
    model: &M,
    current: &M::Data,
    spec: &ScenarioSpec,
    level: f64,
    replication: usize,
    cell_seed: u64,
    target: usize,
    mixtures: Option<(Endpoint, Endpoint, Conjugate, f64)>,
) -> Result<CellOutput, String> {
    let cfg = spec.cbf.config(cell_seed).map_err(|e| e.to_string())?;
    let sel = run_cbf(model, current, &cfg).map_err(|e| e.to_string())?;
    let (q25, q50, q75) = beta_quartiles(sel.selected);
    let selection = CellSelection {
        level,
        replication,
        selected: sel.selected,
        fell_back_to_null: sel.fell_back_to_null,
        prior_mean: sel.selected.mean(),
        prior_q25: q25,
        prior_median: q50,
        prior_q75: q75,
    };
    let summary_stream = |tag: u64| RngStream::new(cell_seed, [tag, 0, purpose::SUMMARY]);
    let mut rows = Vec::with_capacity(4);
    for (k, (method, shape)) in [(Method::CbfNpp, sel.selected), (Method::UniformNpp, BetaShape::UNIFORM)].into_iter().enumerate() {
        let (p, d) = npp_row(model, current, shape, spec.summary_draws, target, &summary_stream(k as u64))
            .map_err(|e| format!("{}: {e}", method.as_str()))?;
        rows.push(row(level, replication, method, sel.selected, &p, Some(&d)));
    }
    if let Some((hist, cur, vague, csd)) = mixtures {
        let rmap = build_rmap(&hist, spec.rmap_omega, vague).map_err(|e| e.to_string())?;
        let sam = build_sam(&hist, &cur, csd, vague).map_err(|e| format!("sam: {e}"))?;
        for (k, (method, prior)) in [(Method::Rmap, rmap), (Method::Sam, sam)].into_iter().enumerate() {
            let stream = RngStream::new(cell_seed, [k as u64, 0, purpose::MIXTURE_DRAWS]);
            let (_, s) = mixture_posterior(&prior, &cur, &stream).map_err(|e| format!("{}: {e}", method.as_str()))?;
            rows.push(row(level, replication, method, sel.selected, &s, None));
        }
    }
    Ok(CellOutput { selection, rows })
}

fn glm_design(rows: u64, p: usize, rng: &mut crate::numerics::StreamRng) -> Matrix<f64> {
    let data: Vec<Vec<f64>> = (0..rows)
        .map(|_| std::iter::once(1.0).chain((1..p).map(|_| sample_standard_normal(rng))).collect())
        .collect();
    Matrix::from_rows(&data).expect("rectangular rows")
}

fn poisson_outcomes(design: &Matrix<f64>, beta: &[f64], rng: &mut crate::numerics::StreamRng) -> Result<Vec<f64>, String> {
    (0..design.rows())
        .map(|i| {
            let eta: f64 = design.row(i).iter().zip(beta).map(|(x, b)| x * b).sum();
            crate::numerics::sample_poisson(rng, eta.exp()).map(|y| y as f64).map_err(|e| e.to_string())
        })
        .collect()
}

/// Runs every (level, replication) cell on the current rayon pool.
///
/// Cells are seeded from `(root_seed, level index, replication)`, so the
/// result does not depend on the pool size.
pub fn run_sweep(spec: &ScenarioSpec, root_seed: u64) -> Result<SweepResult, SimError> {
    spec.validate()?;
    let cells: Vec<(usize, usize)> =
        (0..spec.levels.len()).flat_map(|i| (0..spec.replications).map(move |r| (i, r))).collect();

    // Covariates are shared by all cells of a GLM sweep.
    let designs = match &spec.scenario {
        ScenarioFamily::PoissonGlm { historical_rows, current_rows, coefficients, .. } => {
            let mut rng = RngStream::new(root_seed, [0, 0, purpose::DATA_GENERATION]).rng();
            let h = glm_design(*historical_rows, coefficients.len(), &mut rng);
            let c = glm_design(*current_rows, coefficients.len(), &mut rng);
            Some((h, c))
        }
        _ => None,
    };

    let outcomes: Vec<Result<CellOutput, String>> = cells
        .par_iter()
        .map(|&(i, r)| {
            let level = spec.levels[i];
            let cell_seed = RngStream::new(root_seed, [i as u64, r as u64, purpose::CELL]).derived_seed();
            match &spec.scenario {
                ScenarioFamily::Binomial { historical_trials, current_trials, theta0, theta_prior, csd } => {
                    let y0 = (theta0 * *historical_trials as f64).round() as u64;
                    let hist = BinomialData::new(y0, *historical_trials).map_err(|e| e.to_string())?;
                    let cur = BinomialData::new((y0 as f64 + level) as u64, *current_trials).map_err(|e| e.to_string())?;
                    let prior = BetaShape::new(theta_prior.0, theta_prior.1).map_err(|e| e.to_string())?;
                    let model = BinomialNpp::new(hist, prior).map_err(|e| e.to_string())?;
                    let vague = Conjugate::Beta { a: prior.eta(), b: prior.nu() };
                    let mix = (Endpoint::Binomial(hist), Endpoint::Binomial(cur), vague, *csd);
                    fit_cell(&model, &cur, spec, level, r, cell_seed, 0, Some(mix))
                }
                ScenarioFamily::Gaussian { historical_mean, historical_variance, current_variance, vague_variance, csd } => {
                    let hist = GaussianEffect::new(*historical_mean, *historical_variance).map_err(|e| e.to_string())?;
                    let mut noise = RngStream::new(root_seed, [u64::MAX - 1, r as u64, purpose::DATA_GENERATION]).rng();
                    let estimate = historical_mean + level + current_variance.sqrt() * sample_standard_normal(&mut noise);
                    let cur = GaussianEffect::new(estimate, *current_variance).map_err(|e| e.to_string())?;
                    let model = GaussianNpp::new(hist).map_err(|e| e.to_string())?;
                    let vague = Conjugate::Normal { mean: 0.0, variance: *vague_variance };
                    let csd = csd.unwrap_or(historical_variance.sqrt());
                    let mix = (Endpoint::Gaussian(hist), Endpoint::Gaussian(cur), vague, csd);
                    fit_cell(&model, &cur, spec, level, r, cell_seed, 0, Some(mix))
                }
                ScenarioFamily::PoissonGlm { coefficients, prior_sd, .. } => {
                    let (hd, cd) = designs.as_ref().expect("designs built for GLM sweeps");
                    let mut rng = RngStream::new(root_seed, [i as u64, r as u64, purpose::DATA_GENERATION]).rng();
                    let mut hist_rng = RngStream::new(root_seed, [u64::MAX, r as u64, purpose::DATA_GENERATION]).rng();
                    let hist_y = poisson_outcomes(hd, coefficients, &mut hist_rng)?;
                    let mut beta = coefficients.clone();
                    beta[1] += level;
                    let cur_y = poisson_outcomes(cd, &beta, &mut rng)?;
                    let hist = GlmData::new(hist_y, hd.clone(), Link::Log).map_err(|e| e.to_string())?;
                    let cur = GlmData::new(cur_y, cd.clone(), Link::Log).map_err(|e| e.to_string())?;
                    let prior = GaussianPriorSpec::isotropic(coefficients.len(), *prior_sd).map_err(|e| e.to_string())?;
                    let model = GlmNpp::new(hist, prior).map_err(|e| e.to_string())?;
                    fit_cell(&model, &cur, spec, level, r, cell_seed, 1, None)
                }
            }
        })
        .collect();

    let mut result = SweepResult { levels: spec.levels.clone(), rows: Vec::new(), selections: Vec::new(), failures: Vec::new() };
    for (&(i, r), out) in cells.iter().zip(outcomes) {
        match out {
            Ok(c) => {
                result.selections.push(c.selection);
                result.rows.extend(c.rows);
            }
            Err(error) => result.failures.push(CellFailure { level: spec.levels[i], replication: r, error }),
        }
    }
    if result.failures.len() as f64 > MAX_FAILURE_SHARE * cells.len() as f64 {
        let f = &result.failures[0];
        return Err(SimError::TooManyFailures {
            failed: result.failures.len(),
            total: cells.len(),
            first: format!("level {} replication {}: {}", f.level, f.replication, f.error),
        });
    }
    Ok(result)
}

/// Median of a non-empty sample (mean of the two middle values for even n).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    // linear interpolation between order statistics
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One-sided upper percentile-bootstrap bound on the mean of `values`.
pub fn bootstrap_mean_upper(values: &[f64], confidence: f64, resamples: usize, stream: &RngStream) -> f64 {
    assert!(!values.is_empty(), "bootstrap needs data");
    let mut rng = stream.rng();
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    quantile(&means, confidence)
}

/// Files written by [`emit_plot_data`].
pub const FIGURE_FILES: [&str; 5] = ["selected_prior.csv", "param_sd.csv", "param_mean.csv", "delta_sd.csv", "delta_mean.csv"];
pub const ROWS_FILE: &str = "sweep_rows.csv";

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn figure_tables(result: &SweepResult) -> Vec<(&'static str, Table)> {
    let methods: Vec<Method> = Method::ALL.into_iter().filter(|m| result.rows.iter().any(|r| r.method == *m)).collect();
    let levels: Vec<f64> = result.levels.iter().copied().filter(|l| result.selections.iter().any(|s| s.level == *l)).collect();
    let per_method = |methods: &[Method], f: &dyn Fn(&SweepRow) -> Option<f64>| -> Table {
        let mut header = vec!["level".to_string()];
        header.extend(methods.iter().map(|m| m.as_str().to_string()));
        let rows = levels
            .iter()
            .map(|&l| {
                let mut row = vec![l];
                for &m in methods {
                    let vals: Vec<f64> = result.rows_for(l, m).into_iter().filter_map(f).collect();
                    row.push(if vals.is_empty() { f64::NAN } else { vals.iter().sum::<f64>() / vals.len() as f64 });
                }
                row
            })
            .collect();
        Table { header, rows }
    };
    let selected = Table {
        header: ["level", "selected_mean_median", "prior_q25", "prior_median", "prior_q75"].map(String::from).to_vec(),
        rows: levels
            .iter()
            .map(|&l| {
                let cells: Vec<&CellSelection> = result.selections.iter().filter(|s| s.level == l).collect();
                let m = |f: fn(&CellSelection) -> f64| median(&cells.iter().map(|c| f(c)).collect::<Vec<_>>());
                vec![l, m(|c| c.prior_mean), m(|c| c.prior_q25), m(|c| c.prior_median), m(|c| c.prior_q75)]
            })
            .collect(),
    };
    let npp: Vec<Method> = methods.iter().copied().filter(|m| matches!(m, Method::CbfNpp | Method::UniformNpp)).collect();
    vec![
        ("selected_prior.csv", selected),
        ("param_sd.csv", per_method(&methods, &|r| Some(r.param_sd))),
        ("param_mean.csv", per_method(&methods, &|r| Some(r.param_mean))),
        ("delta_sd.csv", per_method(&npp, &|r| r.delta_sd)),
        ("delta_mean.csv", per_method(&npp, &|r| r.delta_mean)),
    ]
}

fn render_table(t: &Table) -> Result<Vec<u8>, SimError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&t.header)?;
    for r in &t.rows {
        w.write_record(r.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }))?;
    }
    w.into_inner().map_err(|e| SimError::Csv(e.into_error().into()))
}

/// Rows CSV in the sweep schema.
pub fn rows_csv(rows: &[SweepRow]) -> Result<Vec<u8>, SimError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        return Err(SimError::Empty);
    }
    w.into_inner().map_err(|e| SimError::Csv(e.into_error().into()))
}

/// Parses a rows CSV written by [`rows_csv`].
pub fn parse_rows_csv(bytes: &[u8]) -> Result<Vec<SweepRow>, SimError> {
    let mut r = csv::Reader::from_reader(bytes);
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

const PALETTE: [&str; 5] = ["#1b6ca8", "#d1495b", "#2e933c", "#edae49", "#6c4f77"];

/// Standalone SVG line chart: first column on x, one polyline per other column.
fn render_svg(title: &str, t: &Table) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let xs: Vec<f64> = t.rows.iter().map(|r| r[0]).collect();
    let ys: Vec<f64> = t.rows.iter().flat_map(|r| r[1..].iter().copied()).filter(|v| v.is_finite()).collect();
    let (x0, x1) = (xs.iter().cloned().fold(f64::INFINITY, f64::min), xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let (mut y0, mut y1) = (ys.iter().cloned().fold(f64::INFINITY, f64::min), ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    if !(y1 > y0) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| if x1 > x0 { pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad) } else { w / 2.0 };
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{pad}" y="25" font-family="sans-serif" font-size="14">{title}</text>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{pad} {} H{} M{pad} {} V{pad}" stroke="black" fill="none"/>"#,
        h - pad,
        w - pad,
        h - pad
    );
    let _ = writeln!(s, r#"<text x="{pad}" y="{}" font-family="sans-serif" font-size="11">{x0:.3}</text>"#, h - pad + 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{x1:.3}</text>"#, w - pad - 30.0, h - pad + 15.0);
    let _ = writeln!(s, r#"<text x="5" y="{}" font-family="sans-serif" font-size="11">{y0:.3}</text>"#, h - pad);
    let _ = writeln!(s, r#"<text x="5" y="{pad}" font-family="sans-serif" font-size="11">{y1:.3}</text>"#);
    for (c, name) in t.header.iter().enumerate().skip(1) {
        let color = PALETTE[(c - 1) % PALETTE.len()];
        let pts: Vec<String> = t
            .rows
            .iter()
            .filter(|r| r[c].is_finite())
            .map(|r| format!("{:.2},{:.2}", sx(r[0]), sy(r[c])))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{name}</text>"#,
            w - pad - 80.0,
            pad + 14.0 * c as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes the five figure CSVs, the full rows CSV and, with `svg`, one chart
/// per figure CSV into `out_dir`. Returns the written paths.
pub fn emit_plot_data(result: &SweepResult, out_dir: &Path, svg: bool) -> Result<Vec<PathBuf>, SimError> {
    if result.rows.is_empty() {
        return Err(SimError::Empty);
    }
    // render everything before touching the directory
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    for (name, table) in figure_tables(result) {
        files.push((name.to_string(), render_table(&table)?));
        if svg {
            let stem = name.trim_end_matches(".csv");
            files.push((format!("{stem}.svg"), render_svg(stem, &table).into_bytes()));
        }
    }
    files.push((ROWS_FILE.to_string(), rows_csv(&result.rows)?));
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = out_dir.join(name);
        fs::write(&path, bytes).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}
