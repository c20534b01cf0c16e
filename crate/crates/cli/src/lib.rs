//! Front end for calibrated power-prior analyses: JSON run configs, CSV
//! ingestion, the `run` / `simulate` / `bf` commands and their artifacts.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use powercal_core::bayesfactor::{classify_evidence, EvidenceCurve, HypothesisGrid};
use powercal_core::cbf::{
    build_default_grid, run_cbf, shape_stream_key, CbfConfig, CbfError, CbfSelection, DEFAULT_HPDI_MASS,
    DEFAULT_JOINT_DRAWS, DEFAULT_REPLICATES,
};
use powercal_core::models::{
    summarize_joint, BetaShape, BinomialData, BinomialNpp, GaussianEffect, GaussianNpp, GaussianPriorSpec, GlmData,
    GlmNpp, Link, ModelError, NppModel, PosteriorSummary,
};
use powercal_core::numerics::{purpose, Matrix, NumericsError, RngStream};
use powercal_core::sim::{emit_plot_data, run_sweep, ScenarioSpec, SimError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment fallback for `--threads`.
pub const THREADS_ENV: &str = "POWERCAL_THREADS";

pub const SELECTION_FILE: &str = "selection.json";
pub const REPLICATES_FILE: &str = "replicated_logbf.csv";
pub const POSTERIOR_FILE: &str = "posterior_summary.json";
pub const RESOLVED_CONFIG_FILE: &str = "config_resolved.json";
pub const LOGBF_TABLE_FILE: &str = "logbf_table.csv";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => EXIT_VALIDATION,
            Self::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    fn io(path: &Path, e: io::Error) -> Self {
        Self::Validation(format!("{}: {e}", path.display()))
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidData(_) | ModelError::DeltaOutOfRange(_) | ModelError::Parameterization(_) => {
                Self::Validation(e.to_string())
            }
            ModelError::Numerics(_) | ModelError::Optimization { .. } | ModelError::Convergence { .. } => {
                Self::Numerical(e.to_string())
            }
        }
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        Self::Numerical(e.to_string())
    }
}

impl From<CbfError> for CliError {
    fn from(e: CbfError) -> Self {
        match e {
            CbfError::Config(m) => Self::Validation(format!("invalid configuration: {m}")),
            CbfError::Model(m) => m.into(),
            CbfError::Numerics(_) | CbfError::TooManyFailures { .. } => Self::Numerical(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Spec(_) | SimError::Io { .. } | SimError::Csv(_) => Self::Validation(e.to_string()),
            SimError::TooManyFailures { .. } | SimError::Empty => Self::Numerical(e.to_string()),
        }
    }
}

fn json_error(path: &Path, e: serde_json::Error) -> CliError {
    CliError::Validation(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
}

// ---- configuration ----

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Counts {
    pub successes: u64,
    pub trials: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Effect {
    pub estimate: f64,
    pub variance: f64,
}

/// Model family and its data. GLM data are CSV paths, resolved against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Binomial {
        historical: Counts,
        current: Counts,
        #[serde(default = "uniform_pair")]
        theta_prior: (f64, f64),
    },
    Gaussian {
        historical: Effect,
        current: Effect,
    },
    PoissonGlm {
        historical: PathBuf,
        current: PathBuf,
        #[serde(default = "yes")]
        intercept: bool,
        #[serde(default = "default_coef_sd")]
        coefficient_sd: f64,
    },
    LogisticGlm {
        historical: PathBuf,
        current: PathBuf,
        #[serde(default = "yes")]
        intercept: bool,
        #[serde(default = "default_coef_sd")]
        coefficient_sd: f64,
    },
}

fn uniform_pair() -> (f64, f64) {
    (1.0, 1.0)
}
fn yes() -> bool {
    true
}
fn default_coef_sd() -> f64 {
    10.0
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
fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// Alternatives to Beta(1,1); the default 0.5..6 lattice when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<BetaShape>>,
    #[serde(default = "default_k")]
    pub k_replicates: usize,
    #[serde(default = "default_mass")]
    pub hpdi_mass: f64,
    #[serde(default = "default_draws")]
    pub joint_draws: usize,
    /// Posterior draws behind each entry of `posterior_summary.json`.
    #[serde(default = "default_draws")]
    pub summary_draws: usize,
    /// Further fixed priors to summarize next to the selected one.
    #[serde(default)]
    pub extra_priors: Vec<BetaShape>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker count; never affects results, so it is not echoed.
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| json_error(path, e))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text, path)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.hpdi_mass > 0.0 && self.hpdi_mass < 1.0) {
            return Err(CliError::Validation(format!("hpdi_mass must lie in (0, 1) (got {})", self.hpdi_mass)));
        }
        if self.threads == Some(0) {
            return Err(CliError::Validation("threads must be positive".into()));
        }
        match &self.model {
            ModelConfig::PoissonGlm { historical, current, coefficient_sd, .. }
            | ModelConfig::LogisticGlm { historical, current, coefficient_sd, .. } => {
                for p in [historical, current] {
                    let full = self.resolve(p);
                    if !full.is_file() {
                        return Err(CliError::Validation(format!("data file {} does not exist", full.display())));
                    }
                }
                if !(coefficient_sd.is_finite() && *coefficient_sd > 0.0) {
                    return Err(CliError::Validation(format!("coefficient_sd must be positive (got {coefficient_sd})")));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Candidate grid for `run`, which excludes Beta(1,1).
    pub fn hypothesis_grid(&self) -> Result<HypothesisGrid, CliError> {
        match &self.grid {
            Some(g) => Ok(HypothesisGrid::new(g.clone())?),
            None => Ok(build_default_grid()),
        }
    }

    pub fn cbf_config(&self) -> Result<CbfConfig, CliError> {
        let mut cfg = CbfConfig::new(self.hypothesis_grid()?, self.seed);
        cfg.k_replicates = self.k_replicates;
        cfg.hpdi_mass = self.hpdi_mass;
        cfg.joint_draws = self.joint_draws;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serialized form without worker count and output path.
    pub fn resolved_json(&self) -> Result<Vec<u8>, CliError> {
        to_json(self)
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut out = serde_json::to_vec_pretty(v).map_err(|e| CliError::Numerical(format!("serialization failed: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

// ---- ingestion ----

/// Outcome column and named covariates read from a CSV file.
#[derive(Debug, Clone)]
pub struct GlmTable {
    pub data: GlmData,
    /// Design column names, `intercept` first when added.
    pub columns: Vec<String>,
}

/// Reads a header-row CSV with an outcome column `y`; every other column is
/// a numeric covariate, kept in header order.
pub fn ingest_glm_csv(path: &Path, intercept: bool, link: Link) -> Result<GlmTable, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    parse_glm_csv(&bytes, intercept, link).map_err(|e| match e {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_glm_csv(bytes: &[u8], intercept: bool, link: Link) -> Result<GlmTable, CliError> {
    let schema = |m: String| CliError::Validation(format!("schema error: {m}"));
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(bytes);
    let headers = reader.headers().map_err(|e| schema(e.to_string()))?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(schema("empty file or missing header row".into()));
    }
    let y_col = headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| schema(format!("no `y` column in header {:?}", headers.iter().collect::<Vec<_>>())))?;
    let mut columns: Vec<String> = Vec::new();
    if intercept {
        columns.push("intercept".into());
    }
    columns.extend(headers.iter().enumerate().filter(|&(j, _)| j != y_col).map(|(_, h)| h.to_string()));

    let mut outcomes = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::Validation(format!("parse error at row {line}: {e}")))?;
        let mut row = Vec::with_capacity(columns.len());
        if intercept {
            row.push(1.0);
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Validation(format!("parse error at row {line}, column {} (`{}`): `{cell}` is not a number", j + 1, &headers[j]))
            })?;
            if j == y_col {
                outcomes.push(v);
            } else {
                row.push(v);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(schema("no data rows".into()));
    }
    if columns.is_empty() {
        return Err(schema("no covariate columns and no intercept".into()));
    }
    let design = Matrix::from_rows(&rows).map_err(|e| CliError::Validation(format!("schema error: {e}")))?;
    let data = GlmData::new(outcomes, design, link)?;
    Ok(GlmTable { data, columns })
}

// ---- artifacts ----

/// One hypothesis in `selection.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub index: usize,
    pub shape: BetaShape,
    pub observed_log_bf: f64,
    pub survival_at_zero: f64,
    pub hpdi_lower: f64,
    pub hpdi_upper: f64,
    pub observed_in_hpdi: bool,
    pub score: f64,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub index: usize,
    pub shape: BetaShape,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub family: String,
    pub selected: BetaShape,
    pub fell_back_to_null: bool,
    pub k_replicates: usize,
    pub hpdi_mass: f64,
    pub hypotheses: Vec<HypothesisReport>,
    pub failures: Vec<FailureReport>,
    pub unconverged_integrals: usize,
}

impl SelectionReport {
    fn new(family: &str, sel: &CbfSelection, cfg: &CbfConfig) -> Self {
        let index_of = |s: BetaShape| cfg.grid.hypotheses().iter().position(|&h| h == s).expect("shape from grid");
        let hypotheses = sel
            .per_hypothesis
            .iter()
            .map(|d| HypothesisReport {
                index: index_of(d.shape),
                shape: d.shape,
                observed_log_bf: d.observed_log_bf,
                survival_at_zero: d.survival_at_zero,
                hpdi_lower: d.hpdi.lower,
                hpdi_upper: d.hpdi.upper,
                observed_in_hpdi: d.observed_in_hpdi,
                score: d.score,
                evidence: classify_evidence(d.observed_log_bf).to_string(),
            })
            .collect();
        let failures = sel
            .failures
            .iter()
            .map(|f| FailureReport { index: index_of(f.shape), shape: f.shape, error: f.error.clone() })
            .collect();
        Self {
            family: family.into(),
            selected: sel.selected,
            fell_back_to_null: sel.fell_back_to_null,
            k_replicates: cfg.k_replicates,
            hpdi_mass: cfg.hpdi_mass,
            hypotheses,
            failures,
            unconverged_integrals: sel.unconverged_integrals,
        }
    }
}

fn replicates_csv(sel: &CbfSelection, cfg: &CbfConfig) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Numerical(format!("csv write failed: {e}"));
    w.write_record(["hypothesis", "replicate", "value"]).map_err(csv_err)?;
    for d in &sel.per_hypothesis {
        let h = cfg.grid.hypotheses().iter().position(|&s| s == d.shape).expect("shape from grid");
        for (r, v) in d.replicated_log_bfs.iter().enumerate() {
            w.write_record([h.to_string(), r.to_string(), v.to_string()]).map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(|e| CliError::Numerical(format!("csv write failed: {e}")))
}

/// Posterior summaries under one δ prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSummary {
    pub role: String,
    pub shape: BetaShape,
    pub parameters: Vec<PosteriorSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorReport {
    pub family: String,
    pub draws: usize,
    pub priors: Vec<PriorSummary>,
}

impl PosteriorReport {
    pub fn prior(&self, role: &str) -> Option<&PriorSummary> {
        self.priors.iter().find(|p| p.role == role)
    }
}

impl PriorSummary {
    pub fn parameter(&self, name: &str) -> Option<&PosteriorSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

fn summarize_under<M: NppModel>(
    model: &M,
    current: &M::Data,
    names: &[String],
    shapes: &[(String, BetaShape)],
    draws: usize,
    seed: u64,
) -> Result<Vec<PriorSummary>, CliError> {
    let curve = model.delta_curve(current)?;
    shapes
        .iter()
        .map(|(role, shape)| {
            let stream = RngStream::new(seed, [shape_stream_key(*shape), 0, purpose::SUMMARY]);
            let joint = model.sample_joint_posterior(current, &curve, *shape, draws, &stream)?;
            Ok(PriorSummary { role: role.clone(), shape: *shape, parameters: summarize_joint(names, &joint)? })
        })
        .collect()
}

/// Files produced by a command, written to the output directory together.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Writes every file into a scratch directory beside `out`, then moves
    /// them in. Nothing lands in `out` unless all writes succeed.
    pub fn commit(&self, out: &Path) -> Result<Vec<PathBuf>, CliError> {
        let staging = staging_dir(out)?;
        for (name, bytes) in &self.files {
            let p = staging.path().join(name);
            fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
        }
        move_into(staging.path(), self.files.iter().map(|(n, _)| n.as_str()), out)
    }
}

fn staging_dir(out: &Path) -> Result<tempfile::TempDir, CliError> {
    if out.exists() && !out.is_dir() {
        return Err(CliError::Validation(format!("output path {} is not a directory", out.display())));
    }
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
    tempfile::Builder::new().prefix(".powercal-").tempdir_in(&parent).map_err(|e| CliError::io(&parent, e))
}

fn move_into<'a>(staging: &Path, names: impl Iterator<Item = &'a str>, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut written = Vec::new();
    for name in names {
        let to = out.join(name);
        fs::rename(staging.join(name), &to).map_err(|e| CliError::io(&to, e))?;
        written.push(to);
    }
    Ok(written)
}

// ---- commands ----

/// Builds a pool of `threads` workers, or picks the count from the
/// environment, and runs `f` inside it.
pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let n = match threads {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse::<usize>()
                .map_err(|_| CliError::Validation(format!("{THREADS_ENV}={v:?} is not a positive integer")))?,
            Err(_) => 0,
        },
    };
    if threads == Some(0) {
        return Err(CliError::Validation("threads must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::Validation(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn run_model<M: NppModel>(
    model: &M,
    current: &M::Data,
    names: &[String],
    family: &str,
    cfg: &RunConfig,
) -> Result<Artifacts, CliError> {
    let cbf = cfg.cbf_config()?;
    let sel = run_cbf(model, current, &cbf)?;
    let mut shapes = vec![("selected".to_string(), sel.selected), ("uniform".to_string(), BetaShape::UNIFORM)];
    shapes.extend(cfg.extra_priors.iter().map(|&s| ("extra".to_string(), s)));
    let priors = summarize_under(model, current, names, &shapes, cfg.summary_draws, cfg.seed)?;

    let mut art = Artifacts::default();
    art.add(SELECTION_FILE, to_json(&SelectionReport::new(family, &sel, &cbf))?);
    art.add(REPLICATES_FILE, replicates_csv(&sel, &cbf)?);
    art.add(POSTERIOR_FILE, to_json(&PosteriorReport { family: family.into(), draws: cfg.summary_draws, priors })?);
    art.add(RESOLVED_CONFIG_FILE, cfg.resolved_json()?);
    Ok(art)
}

/// Everything a validated config needs to run.
enum Prepared {
    Binomial(BinomialNpp, BinomialData),
    Gaussian(GaussianNpp, GaussianEffect),
    Glm(GlmNpp, GlmData, Vec<String>, &'static str),
}

fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    cfg.validate()?;
    Ok(match &cfg.model {
        ModelConfig::Binomial { historical, current, theta_prior } => {
            let prior = BetaShape::new(theta_prior.0, theta_prior.1)?;
            Prepared::Binomial(
                BinomialNpp::new(BinomialData::new(historical.successes, historical.trials)?, prior)?,
                BinomialData::new(current.successes, current.trials)?,
            )
        }
        ModelConfig::Gaussian { historical, current } => Prepared::Gaussian(
            GaussianNpp::new(GaussianEffect::new(historical.estimate, historical.variance)?)?,
            GaussianEffect::new(current.estimate, current.variance)?,
        ),
        ModelConfig::PoissonGlm { historical, current, intercept, coefficient_sd }
        | ModelConfig::LogisticGlm { historical, current, intercept, coefficient_sd } => {
            let (link, family) = match cfg.model {
                ModelConfig::PoissonGlm { .. } => (Link::Log, "poisson-glm"),
                _ => (Link::Logit, "logistic-glm"),
            };
            let hist = ingest_glm_csv(&cfg.resolve(historical), *intercept, link)?;
            let cur = ingest_glm_csv(&cfg.resolve(current), *intercept, link)?;
            if hist.columns != cur.columns {
                return Err(CliError::Validation(format!(
                    "historical columns {:?} differ from current columns {:?}",
                    hist.columns, cur.columns
                )));
            }
            let prior = GaussianPriorSpec::isotropic(hist.columns.len(), *coefficient_sd)?;
            Prepared::Glm(GlmNpp::new(hist.data, prior)?, cur.data, hist.columns, family)
        }
    })
}

/// Calibrates the δ prior and summarizes the posterior under it.
pub fn cmd_run(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    match prepare(cfg)? {
        Prepared::Binomial(m, c) => run_model(&m, &c, &m.param_names(), "binomial", cfg),
        Prepared::Gaussian(m, c) => run_model(&m, &c, &m.param_names(), "gaussian", cfg),
        Prepared::Glm(m, c, names, family) => run_model(&m, &c, &names, family, cfg),
    }
}

/// Grid for `bf`: any distinct shapes, Beta(1,1) included.
fn bf_grid(cfg: &RunConfig) -> Result<Vec<BetaShape>, CliError> {
    let Some(g) = &cfg.grid else {
        return Ok(build_default_grid().hypotheses().to_vec());
    };
    if g.is_empty() {
        return Err(CliError::Validation("grid is empty".into()));
    }
    let mut seen = HashSet::new();
    for s in g {
        if !seen.insert((s.eta().to_bits(), s.nu().to_bits())) {
            return Err(CliError::Validation(format!("grid lists {s} twice")));
        }
    }
    Ok(g.clone())
}

fn bf_table<M: NppModel>(model: &M, current: &M::Data, shapes: &[BetaShape]) -> Result<Vec<u8>, CliError> {
    model.validate_current(current)?;
    let ev = EvidenceCurve::new(model.delta_curve(current)?);
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Numerical(format!("csv write failed: {e}"));
    w.write_record(["eta", "nu", "log_bf", "category", "direction", "converged"]).map_err(csv_err)?;
    for &s in shapes {
        let bf = ev.log_bf(s)?;
        let cat = classify_evidence(bf.value);
        let direction = serde_json::to_value(cat.direction).expect("unit enum");
        w.write_record([
            s.eta().to_string(),
            s.nu().to_string(),
            bf.value.to_string(),
            cat.label.as_str().to_string(),
            direction.as_str().unwrap_or_default().to_string(),
            bf.converged.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::Numerical(format!("csv write failed: {e}")))
}

/// Observed log-BF of every grid shape against Beta(1,1).
pub fn cmd_bf(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let shapes = bf_grid(cfg)?;
    let table = match prepare(cfg)? {
        Prepared::Binomial(m, c) => bf_table(&m, &c, &shapes)?,
        Prepared::Gaussian(m, c) => bf_table(&m, &c, &shapes)?,
        Prepared::Glm(m, c, ..) => bf_table(&m, &c, &shapes)?,
    };
    let mut art = Artifacts::default();
    art.add(LOGBF_TABLE_FILE, table);
    art.add(RESOLVED_CONFIG_FILE, cfg.resolved_json()?);
    Ok(art)
}

/// The scenario spec plus the seed it ran under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedScenario {
    pub seed: u64,
    pub spec: ScenarioSpec,
}

pub fn load_scenario(path: &Path) -> Result<ScenarioSpec, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let spec: ScenarioSpec = serde_json::from_str(&text).map_err(|e| json_error(path, e))?;
    spec.validate()?;
    Ok(spec)
}

/// Runs a sweep and writes its figure tables, row dump and resolved spec.
pub fn cmd_simulate(spec: &ScenarioSpec, seed: u64, out: &Path, svg: bool) -> Result<Vec<PathBuf>, CliError> {
    let result = run_sweep(spec, seed)?;
    let staging = staging_dir(out)?;
    let written = emit_plot_data(&result, staging.path(), svg)?;
    let resolved = staging.path().join(RESOLVED_CONFIG_FILE);
    let bytes = to_json(&ResolvedScenario { seed, spec: spec.clone() })?;
    fs::write(&resolved, bytes).map_err(|e| CliError::io(&resolved, e))?;
    let names: Vec<String> = written
        .iter()
        .chain(std::iter::once(&resolved))
        .map(|p| p.file_name().expect("file path").to_string_lossy().into_owned())
        .collect();
    move_into(staging.path(), names.iter().map(String::as_str), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intercept_is_prepended() {
        let t = parse_glm_csv(b"y,treat\n1,0\n0,1\n", true, Link::Logit).unwrap();
        assert_eq!(t.columns, ["intercept", "treat"]);
        let d = t.data.design();
        assert_eq!((d[(0, 0)], d[(0, 1)], d[(1, 0)], d[(1, 1)]), (1.0, 0.0, 1.0, 1.0));
        assert_eq!(t.data.outcomes(), [1.0, 0.0]);
    }

    #[test]
    fn csv_schema_errors() {
        for bad in [&b""[..], b"y,x\n", b"a,b\n1,2\n"] {
            let e = parse_glm_csv(bad, true, Link::Log).unwrap_err();
            assert!(matches!(e, CliError::Validation(ref m) if m.contains("schema")), "{e}");
        }
        let e = parse_glm_csv(b"y,x\n1,2\n0,abc\n", true, Link::Log).unwrap_err();
        assert!(e.to_string().contains("row 3, column 2"), "{e}");
        let e = parse_glm_csv(b"y,x,z\n1,1,2\n0,2,4\n3,3,6\n", false, Link::Log).unwrap_err();
        assert!(e.to_string().contains("rank"), "{e}");
    }

    #[test]
    fn malformed_json_reports_position() {
        let e = RunConfig::from_json("{\n  \"model\": {\n  ", Path::new("c.json")).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_VALIDATION);
        assert!(e.to_string().starts_with("c.json:3:"), "{e}");
    }

    #[test]
    fn bf_grid_allows_null_but_not_duplicates() {
        let mut cfg = RunConfig::from_json(
            r#"{"model": {"family": "binomial", "historical": {"successes": 1, "trials": 5},
                "current": {"successes": 1, "trials": 5}}, "grid": [[1, 1]]}"#,
            Path::new("c.json"),
        )
        .unwrap();
        assert_eq!(bf_grid(&cfg).unwrap(), [BetaShape::UNIFORM]);
        cfg.grid = Some(vec![BetaShape::UNIFORM, BetaShape::UNIFORM]);
        assert!(bf_grid(&cfg).is_err());
    }
}
