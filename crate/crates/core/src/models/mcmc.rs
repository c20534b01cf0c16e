//! Adaptive random-walk Metropolis with split-R̂ checking.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::ModelError;
use crate::numerics::{purpose, sample_standard_normal, Cholesky, Matrix, RngStream, StreamRng};

/// Largest acceptable split-R̂.
pub const RHAT_THRESHOLD: f64 = 1.01;

#[derive(Debug, Clone, Serialize)]
pub struct MetropolisConfig {
    pub chains: usize,
    pub warmup: usize,
    /// Kept iterations per chain before any extension.
    pub kept: usize,
    pub target_acceptance: f64,
    /// Times the kept phase may double while R̂ is too large.
    pub max_extensions: usize,
}

impl MetropolisConfig {
    /// Four chains, half of each discarded as warm-up, `total` kept draws.
    pub fn for_total_draws(total: usize) -> Self {
        let chains = 4;
        let kept = total.div_ceil(chains);
        Self { chains, warmup: kept, kept, target_acceptance: 0.234, max_extensions: 3 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetropolisDiagnostics {
    pub rhat: Vec<f64>,
    pub acceptance: Vec<f64>,
    pub extensions: usize,
    pub kept_per_chain: usize,
}

pub struct MetropolisOutput {
    pub draws: Vec<Vec<f64>>,
    pub diagnostics: MetropolisDiagnostics,
}

struct Chain {
    rng: StreamRng,
    x: Vec<f64>,
    lp: f64,
    chol: Cholesky<f64>,
    scale: f64,
    accepted: usize,
    steps: usize,
    kept: Vec<Vec<f64>>,
}

impl Chain {
    // one proposal; returns the acceptance probability
    fn step<F: Fn(&[f64]) -> f64>(&mut self, target: &F) -> f64 {
        let z: Vec<f64> = (0..self.x.len()).map(|_| sample_standard_normal(&mut self.rng)).collect();
        let shift = self.chol.lower_mul(&z);
        let prop: Vec<f64> = self.x.iter().zip(&shift).map(|(x, s)| x + self.scale * s).collect();
        let lp = target(&prop);
        let alpha = if lp.is_nan() { 0.0 } else { (lp - self.lp).exp().min(1.0) };
        let u: f64 = self.rng.random();
        self.steps += 1;
        if u < alpha {
            self.x = prop;
            self.lp = lp;
            self.accepted += 1;
        }
        alpha
    }
}

fn empirical_covariance(samples: &[Vec<f64>]) -> Matrix<f64> {
    let d = samples[0].len();
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / n;
        }
    }
    let mut cov = Matrix::zeros(d, d);
    for s in samples {
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += (s[a] - mean[a]) * (s[b] - mean[b]) / (n - 1.0);
            }
        }
    }
    // shrink toward a small multiple of the identity
    let w = n / (n + 5.0);
    for a in 0..d {
        for b in 0..d {
            cov[(a, b)] *= w;
        }
        cov[(a, a)] += 1e-3 * (1.0 - w);
    }
    cov
}

fn warm_up<F, I>(target: &F, init: &I, cov: &Cholesky<f64>, cfg: &MetropolisConfig, seed: u64, c: usize) -> Result<Chain, ModelError>
where
    F: Fn(&[f64]) -> f64,
    I: Fn(&mut StreamRng) -> Vec<f64>,
{
    let mut rng = RngStream::new(seed, [c as u64, 0, purpose::JOINT_DRAWS]).rng();
    let mut start = None;
    for _ in 0..100 {
        let x = init(&mut rng);
        let lp = target(&x);
        if lp.is_finite() {
            start = Some((x, lp));
            break;
        }
    }
    let (x, lp) = start.ok_or_else(|| ModelError::Parameterization("no finite starting point for the sampler".into()))?;
    let d = x.len();
    let base_scale = 2.38 / (d as f64).sqrt();
    let mut chain =
        Chain { rng, x, lp, chol: cov.clone(), scale: base_scale, accepted: 0, steps: 0, kept: Vec::new() };
    let switch = cfg.warmup / 2;
    let mut history = Vec::with_capacity(switch);
    let mut t0 = 0;
    for t in 0..cfg.warmup {
        if t == switch && history.len() > 2 * d + 2 {
            // second half of the first phase estimates the proposal shape
            let tail = &history[history.len() / 2..];
            if let Ok(ch) = empirical_covariance(tail).cholesky() {
                chain.chol = ch;
                chain.scale = base_scale;
                t0 = t;
            }
        }
        let alpha = chain.step(target);
        let gain = ((t - t0 + 1) as f64).powf(-0.6);
        chain.scale *= (gain * (alpha - cfg.target_acceptance)).exp();
        if t < switch {
            history.push(chain.x.clone());
        }
    }
    chain.accepted = 0;
    chain.steps = 0;
    Ok(chain)
}

/// Classic split-R̂ of one scalar across chains: each chain is cut in two
/// halves and between/within variances are compared.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0) / 2;
    if n < 2 {
        return f64::INFINITY;
    }
    let halves: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..n], &c[n..2 * n]]).collect();
    let m = halves.len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / n as f64).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n as f64 / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n as f64 - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    (var_plus / w).sqrt()
}

fn rhats(chains: &[Chain]) -> Vec<f64> {
    let d = chains[0].x.len();
    (0..d)
        .map(|j| {
            let coord: Vec<Vec<f64>> = chains.iter().map(|c| c.kept.iter().map(|x| x[j]).collect()).collect();
            split_rhat(&coord)
        })
        .collect()
}

/// Runs `cfg.chains` chains targeting `log_target` and returns
/// `cfg.chains · cfg.kept` draws, chain by chain. Chains start from `init`
/// and propose with covariance `cov` until warm-up re-estimates it.
pub fn run_metropolis<F, I>(
    log_target: &F,
    init: &I,
    cov: &Matrix<f64>,
    cfg: &MetropolisConfig,
    seed: u64,
) -> Result<MetropolisOutput, ModelError>
where
    F: Fn(&[f64]) -> f64 + Sync,
    I: Fn(&mut StreamRng) -> Vec<f64> + Sync,
{
    let chol = cov.cholesky().map_err(ModelError::Numerics)?;
    let mut chains: Vec<Chain> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| warm_up(log_target, init, &chol, cfg, seed, c))
        .collect::<Result<_, _>>()?;
    let mut batch = cfg.kept;
    let mut extensions = 0;
    loop {
        chains.par_iter_mut().for_each(|ch| {
            for _ in 0..batch {
                ch.step(log_target);
                let x = ch.x.clone();
                ch.kept.push(x);
            }
        });
        let rhat = rhats(&chains);
        let worst = rhat.iter().fold(0.0, |acc: f64, &r| if r.is_nan() { f64::INFINITY } else { acc.max(r) });
        if worst < RHAT_THRESHOLD {
            let kept_per_chain = chains[0].kept.len();
            let acceptance = chains.iter().map(|c| c.accepted as f64 / c.steps as f64).collect();
            let draws = chains.into_iter().flat_map(|c| thin(c.kept, cfg.kept)).collect();
            return Ok(MetropolisOutput {
                draws,
                diagnostics: MetropolisDiagnostics { rhat, acceptance, extensions, kept_per_chain },
            });
        }
        if extensions == cfg.max_extensions {
            return Err(ModelError::Convergence { max_rhat: worst, threshold: RHAT_THRESHOLD, rhat });
        }
        extensions += 1;
        batch = chains[0].kept.len();
    }
}

// evenly spaced subset of `keep` draws
fn thin(draws: Vec<Vec<f64>>, keep: usize) -> Vec<Vec<f64>> {
    if draws.len() <= keep {
        return draws;
    }
    let n = draws.len();
    (0..keep).map(|j| draws[j * n / keep].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_rhat_flags_disagreeing_chains() {
        let mut rng = RngStream::new(1, [0, 0, purpose::TEST]).rng();
        let good: Vec<Vec<f64>> = (0..4).map(|_| (0..1000).map(|_| sample_standard_normal(&mut rng)).collect()).collect();
        assert!(split_rhat(&good) < 1.01);
        let mut bad = good.clone();
        for v in bad[0].iter_mut() {
            *v += 3.0;
        }
        assert!(split_rhat(&bad) > 1.1);
    }

    #[test]
    fn recovers_a_correlated_gaussian() {
        // N(m, S) with S = [[1, 0.8], [0.8, 1]]
        let m = [1.0, -2.0];
        let target = |x: &[f64]| {
            let (a, b) = (x[0] - m[0], x[1] - m[1]);
            -0.5 * (a * a - 1.6 * a * b + b * b) / 0.36
        };
        let init = |rng: &mut StreamRng| vec![sample_standard_normal(rng), sample_standard_normal(rng)];
        let cfg = MetropolisConfig::for_total_draws(8000);
        let out = run_metropolis(&target, &init, &Matrix::identity(2), &cfg, 7).unwrap();
        assert_eq!(out.draws.len(), 8000);
        for j in 0..2 {
            let mean = out.draws.iter().map(|x| x[j]).sum::<f64>() / 8000.0;
            assert!((mean - m[j]).abs() < 0.1, "coord {j} mean {mean}");
        }
        let acc = out.diagnostics.acceptance.iter().sum::<f64>() / 4.0;
        assert!((0.15..0.4).contains(&acc), "acceptance {acc}");
        let again = run_metropolis(&target, &init, &Matrix::identity(2), &cfg, 7).unwrap();
        assert_eq!(again.draws, out.draws);
    }
}
