//! Calibrated Bayes factor selection of the Beta prior on δ.
//!
//! For every candidate shape the observed log Bayes factor against Beta(1,1)
//! is compared with log Bayes factors of datasets replicated from the
//! posterior predictive under that shape. A shape scores
//! `S(0) · logBF_obs` when more than half of the replicated values are
//! positive and the observed value lies within their HPDI, and zero
//! otherwise. The highest positive score wins; without one, Beta(1,1) is kept.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayesfactor::{EvidenceCurve, HypothesisGrid};
use crate::models::{posterior_predictive_replicate, BetaShape, ModelError, NppModel};
use crate::numerics::{empirical_survival_at, hpd_interval, purpose, HpdInterval, NumericsError, RngStream};

/// Smallest replicate count for which the empirical survival function is used.
pub const MIN_REPLICATES: usize = 50;

pub const DEFAULT_REPLICATES: usize = 500;
pub const DEFAULT_HPDI_MASS: f64 = 0.75;
/// Joint posterior draws per hypothesis (4 chains × 1000 kept for GLMs).
pub const DEFAULT_JOINT_DRAWS: usize = 4000;

/// Share of hypotheses that may fail before the whole run is abandoned.
pub const MAX_FAILURE_SHARE: f64 = 0.10;

#[derive(Debug, Error)]
pub enum CbfError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("{failed} of {total} hypotheses failed (first: {first})")]
    TooManyFailures { failed: usize, total: usize, first: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbfConfig {
    pub grid: HypothesisGrid,
    pub k_replicates: usize,
    pub hpdi_mass: f64,
    pub root_seed: u64,
    /// Size of the pool the caller runs this in; results never depend on it.
    pub worker_count_hint: usize,
    pub joint_draws: usize,
}

impl CbfConfig {
    pub fn new(grid: HypothesisGrid, root_seed: u64) -> Self {
        Self {
            grid,
            k_replicates: DEFAULT_REPLICATES,
            hpdi_mass: DEFAULT_HPDI_MASS,
            root_seed,
            worker_count_hint: rayon::current_num_threads(),
            joint_draws: DEFAULT_JOINT_DRAWS,
        }
    }

    pub fn validate(&self) -> Result<(), CbfError> {
        if self.k_replicates < MIN_REPLICATES {
            return Err(CbfError::Config(format!(
                "k_replicates must be at least {MIN_REPLICATES} (got {})",
                self.k_replicates
            )));
        }
        if !(self.hpdi_mass > 0.0 && self.hpdi_mass < 1.0) {
            return Err(CbfError::Config(format!("hpdi_mass must lie in (0, 1) (got {})", self.hpdi_mass)));
        }
        if self.joint_draws < self.k_replicates {
            return Err(CbfError::Config(format!(
                "joint_draws ({}) must be at least k_replicates ({})",
                self.joint_draws, self.k_replicates
            )));
        }
        if self.worker_count_hint == 0 {
            return Err(CbfError::Config("worker_count_hint must be positive".into()));
        }
        Ok(())
    }
}

/// Every `(η, ν)` with both shapes in `{0.5, 1, …, 6}` except `(1, 1)`.
pub fn build_default_grid() -> HypothesisGrid {
    let steps: Vec<f64> = (1..=12).map(|i| i as f64 * 0.5).collect();
    let shapes = steps
        .iter()
        .flat_map(|&a| steps.iter().map(move |&b| (a, b)))
        .filter(|&(a, b)| !(a == 1.0 && b == 1.0))
        .map(|(a, b)| BetaShape::new(a, b).expect("positive grid values"))
        .collect();
    HypothesisGrid::new(shapes).expect("default grid is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisDiagnostics {
    pub shape: BetaShape,
    pub observed_log_bf: f64,
    pub replicated_log_bfs: Vec<f64>,
    pub survival_at_zero: f64,
    pub hpdi: HpdInterval<f64>,
    pub observed_in_hpdi: bool,
    pub score: f64,
}

/// Diagnostics and score of one hypothesis from its observed and replicated
/// log Bayes factors.
pub fn score_hypothesis(
    shape: BetaShape,
    observed_log_bf: f64,
    replicated_log_bfs: Vec<f64>,
    hpdi_mass: f64,
) -> Result<HypothesisDiagnostics, NumericsError> {
    if replicated_log_bfs.len() < MIN_REPLICATES {
        return Err(NumericsError::InsufficientData { needed: MIN_REPLICATES, got: replicated_log_bfs.len() });
    }
    let survival_at_zero = empirical_survival_at(&replicated_log_bfs, 0.0)?;
    let hpdi = hpd_interval(&replicated_log_bfs, hpdi_mass)?;
    let observed_in_hpdi = hpdi.contains(observed_log_bf);
    let score = if survival_at_zero > 0.5 && observed_in_hpdi { survival_at_zero * observed_log_bf } else { 0.0 };
    Ok(HypothesisDiagnostics {
        shape,
        observed_log_bf,
        replicated_log_bfs,
        survival_at_zero,
        hpdi,
        observed_in_hpdi,
        score,
    })
}

/// Highest score, ties to the lexicographically smallest shape; Beta(1,1)
/// when no score is strictly positive. Returns the shape and whether the
/// null was kept.
pub fn select(per_hypothesis: &[HypothesisDiagnostics]) -> (BetaShape, bool) {
    let best = per_hypothesis.iter().max_by(|a, b| {
        a.score.partial_cmp(&b.score).unwrap_or(Ordering::Equal).then_with(|| b.shape.lex_cmp(&a.shape))
    });
    match best {
        Some(d) if d.score > 0.0 => (d.shape, false),
        _ => (BetaShape::UNIFORM, true),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisFailure {
    pub shape: BetaShape,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbfSelection {
    pub selected: BetaShape,
    pub fell_back_to_null: bool,
    /// In grid order, failed hypotheses omitted.
    pub per_hypothesis: Vec<HypothesisDiagnostics>,
    pub failures: Vec<HypothesisFailure>,
    /// Marginal-likelihood integrals that hit the node cap.
    pub unconverged_integrals: usize,
}

/// Stream key component identifying a hypothesis by its shape, so the
/// random numbers a hypothesis sees do not depend on its grid position.
pub fn shape_stream_key(shape: BetaShape) -> u64 {
    shape.eta().to_bits() ^ shape.nu().to_bits().rotate_left(29)
}

type SharedEvidence<C> = Arc<OnceLock<Result<Arc<EvidenceCurve<C>>, ModelError>>>;

// memoizes evidence curves of replicated datasets that carry an exact key
struct CurveMemo<C> {
    map: Mutex<HashMap<u64, SharedEvidence<C>>>,
}

impl<C: crate::models::DeltaCurve> CurveMemo<C> {
    fn new() -> Self {
        Self { map: Mutex::new(HashMap::new()) }
    }

    fn get(&self, key: u64, build: impl FnOnce() -> Result<C, ModelError>) -> Result<Arc<EvidenceCurve<C>>, ModelError> {
        let slot = self.map.lock().expect("memo lock").entry(key).or_default().clone();
        slot.get_or_init(|| build().map(|c| Arc::new(EvidenceCurve::new(c)))).clone()
    }
}

struct Replicated {
    values: Vec<f64>,
    unconverged: usize,
}

fn replicate_hypothesis<M: NppModel>(
    model: &M,
    current: &M::Data,
    observed: &EvidenceCurve<M::Curve>,
    shape: BetaShape,
    cfg: &CbfConfig,
    memo: &CurveMemo<M::Curve>,
) -> Result<Replicated, ModelError> {
    let hkey = shape_stream_key(shape);
    let draws = model.sample_joint_posterior(
        current,
        observed.curve(),
        shape,
        cfg.joint_draws,
        &RngStream::new(cfg.root_seed, [hkey, 0, purpose::JOINT_DRAWS]),
    )?;
    let reps = posterior_predictive_replicate(
        model,
        &draws,
        current,
        &RngStream::new(cfg.root_seed, [hkey, 0, purpose::REPLICATE_SELECTION]),
        cfg.k_replicates,
    )?;

    let keys: Vec<Option<u64>> = reps.iter().map(|r| model.replicate_key(r)).collect();
    if keys.iter().all(Option::is_some) {
        // one Bayes factor per distinct replicate
        let mut first: BTreeMap<u64, usize> = BTreeMap::new();
        for (j, k) in keys.iter().enumerate() {
            first.entry(k.expect("checked")).or_insert(j);
        }
        let distinct: Vec<(u64, usize)> = first.into_iter().collect();
        let values: Vec<(u64, f64, bool)> = distinct
            .par_iter()
            .map(|&(k, j)| {
                let ev = memo.get(k, || model.delta_curve(&reps[j]))?;
                let bf = ev.log_bf(shape)?;
                Ok((k, bf.value, bf.converged))
            })
            .collect::<Result<_, ModelError>>()?;
        let lookup: HashMap<u64, f64> = values.iter().map(|&(k, v, _)| (k, v)).collect();
        Ok(Replicated {
            values: keys.iter().map(|k| lookup[&k.expect("checked")]).collect(),
            unconverged: values.iter().filter(|v| !v.2).count(),
        })
    } else {
        let bfs: Vec<(f64, bool)> = reps
            .par_iter()
            .map(|r| {
                let ev = EvidenceCurve::new(model.delta_curve(r)?);
                let bf = ev.log_bf(shape)?;
                Ok((bf.value, bf.converged))
            })
            .collect::<Result<_, ModelError>>()?;
        Ok(Replicated {
            values: bfs.iter().map(|b| b.0).collect(),
            unconverged: bfs.iter().filter(|b| !b.1).count(),
        })
    }
}

/// Runs the calibration over every hypothesis of `cfg.grid` on the current
/// rayon pool. Output depends only on the inputs and `cfg.root_seed`.
pub fn run_cbf<M: NppModel>(model: &M, current: &M::Data, cfg: &CbfConfig) -> Result<CbfSelection, CbfError> {
    cfg.validate()?;
    model.validate_current(current)?;
    let observed = EvidenceCurve::new(model.delta_curve(current)?);
    let memo = CurveMemo::new();
    let shapes = cfg.grid.hypotheses();
    let observed_bfs: Vec<_> = shapes.iter().map(|&s| observed.log_bf(s)).collect::<Result<_, _>>()?;

    let outcomes: Vec<Result<(HypothesisDiagnostics, usize), String>> = shapes
        .par_iter()
        .zip(observed_bfs.par_iter())
        .map(|(&shape, obs)| {
            let rep = replicate_hypothesis(model, current, &observed, shape, cfg, &memo).map_err(|e| e.to_string())?;
            let diag = score_hypothesis(shape, obs.value, rep.values, cfg.hpdi_mass).map_err(|e| e.to_string())?;
            Ok((diag, rep.unconverged + usize::from(!obs.converged)))
        })
        .collect();

    let mut per_hypothesis = Vec::new();
    let mut failures = Vec::new();
    let mut unconverged_integrals = 0;
    for (&shape, out) in shapes.iter().zip(outcomes) {
        match out {
            Ok((d, u)) => {
                unconverged_integrals += u;
                per_hypothesis.push(d);
            }
            Err(error) => failures.push(HypothesisFailure { shape, error }),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_SHARE * shapes.len() as f64 {
        return Err(CbfError::TooManyFailures {
            failed: failures.len(),
            total: shapes.len(),
            first: format!("{}: {}", failures[0].shape, failures[0].error),
        });
    }
    let (selected, fell_back_to_null) = select(&per_hypothesis);
    Ok(CbfSelection { selected, fell_back_to_null, per_hypothesis, failures, unconverged_integrals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{BinomialData, BinomialNpp};

    fn diag(shape: (f64, f64), survival: f64, observed: f64, inside: bool) -> HypothesisDiagnostics {
        let score = if survival > 0.5 && inside { survival * observed } else { 0.0 };
        HypothesisDiagnostics {
            shape: BetaShape::new(shape.0, shape.1).unwrap(),
            observed_log_bf: observed,
            replicated_log_bfs: vec![],
            survival_at_zero: survival,
            hpdi: HpdInterval { lower: -1.0, upper: 1.0, mass: 0.75 },
            observed_in_hpdi: inside,
            score,
        }
    }

    #[test]
    fn default_grid_has_143_alternatives() {
        let g = build_default_grid();
        assert_eq!(g.len(), 143);
        let has = |a, b| g.hypotheses().contains(&BetaShape::new(a, b).unwrap());
        assert!(has(0.5, 6.0) && has(6.0, 0.5) && !has(1.0, 1.0));
    }

    #[test]
    fn higher_score_wins() {
        let a = diag((2.0, 1.0), 0.8, 0.5, true);
        let b = diag((3.0, 1.0), 0.6, 1.0, true);
        assert!((a.score - 0.4).abs() < 1e-15 && (b.score - 0.6).abs() < 1e-15);
        assert_eq!(select(&[a, b]).0, BetaShape::new(3.0, 1.0).unwrap());
    }

    #[test]
    fn ties_go_to_the_smallest_shape() {
        let a = diag((3.0, 1.0), 0.8, 0.5, true);
        let b = diag((2.0, 4.0), 0.8, 0.5, true);
        assert_eq!(select(&[a.clone(), b.clone()]).0, b.shape);
        assert_eq!(select(&[b.clone(), a]).0, b.shape);
    }

    #[test]
    fn scoring_indicators() {
        let reps: Vec<f64> = (0..100).map(|i| i as f64 / 10.0 - 1.0).collect();
        let s = BetaShape::new(2.0, 2.0).unwrap();
        let d = score_hypothesis(s, 2.0, reps.clone(), 0.75).unwrap();
        assert_eq!(d.survival_at_zero, 0.89);
        assert!(d.observed_in_hpdi);
        assert!((d.score - 0.89 * 2.0).abs() < 1e-15);
        assert_eq!(score_hypothesis(s, 20.0, reps.clone(), 0.75).unwrap().score, 0.0);
        let low: Vec<f64> = reps.iter().map(|r| r - 5.0).collect();
        assert_eq!(score_hypothesis(s, -1.0, low, 0.75).unwrap().score, 0.0);
        assert!(score_hypothesis(s, 0.0, reps[..49].to_vec(), 0.75).is_err());
    }

    #[test]
    fn config_limits() {
        let mut cfg = CbfConfig::new(build_default_grid(), 1);
        assert!(cfg.validate().is_ok());
        cfg.k_replicates = 49;
        assert!(cfg.validate().is_err());
        cfg.k_replicates = 50;
        cfg.hpdi_mass = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn no_history_falls_back_to_null() {
        let model = BinomialNpp::new(BinomialData::new(0, 0).unwrap(), BetaShape::UNIFORM).unwrap();
        let grid = HypothesisGrid::new(vec![BetaShape::new(6.0, 0.5).unwrap(), BetaShape::new(0.5, 6.0).unwrap()]).unwrap();
        let mut cfg = CbfConfig::new(grid, 11);
        cfg.k_replicates = 100;
        cfg.joint_draws = 400;
        let out = run_cbf(&model, &BinomialData::new(7, 30).unwrap(), &cfg).unwrap();
        assert!(out.fell_back_to_null);
        assert_eq!(out.selected, BetaShape::UNIFORM);
        for d in &out.per_hypothesis {
            assert_eq!(d.observed_log_bf, 0.0);
            assert!(d.replicated_log_bfs.iter().all(|&v| v.abs() < 1e-12));
            assert_eq!(d.survival_at_zero, 0.0);
        }
    }
}
