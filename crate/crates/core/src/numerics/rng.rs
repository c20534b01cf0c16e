//! Keyed random streams.
//!
//! A stream is identified by a root seed and a three-part key. The key is
//! hashed into a ChaCha8 seed, so a task's variates depend only on
//! `(root_seed, key)` and never on which worker runs it or in what order.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::NumericsError;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags for the third key component.
pub mod purpose {
    pub const JOINT_DRAWS: u64 = 1;
    pub const REPLICATE_SELECTION: u64 = 2;
    pub const REPLICATE_DATA: u64 = 3;
    pub const MIXTURE_DRAWS: u64 = 4;
    pub const DATA_GENERATION: u64 = 5;
    pub const CELL: u64 = 6;
    pub const SUMMARY: u64 = 7;
    pub const TEST: u64 = 99;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub root_seed: u64,
    pub key: [u64; 3],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(root_seed: u64, key: [u64; 3]) -> Self {
        Self { root_seed, key }
    }

    /// Seed for a nested computation (e.g. one sweep cell's calibration run).
    pub fn derived_seed(&self) -> u64 {
        let mut state = self.root_seed;
        let mut out = splitmix64(&mut state);
        for &k in &self.key {
            state ^= splitmix64(&mut k.wrapping_add(out));
            out = splitmix64(&mut state);
        }
        out
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut state = self.root_seed ^ 0x5EED_0F_C0FFEE;
        let mut seed = [0u8; 32];
        // absorb the key, then squeeze 32 bytes
        for &k in &self.key {
            let mut ks = k;
            state ^= splitmix64(&mut ks);
            splitmix64(&mut state);
        }
        for chunk in seed.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

/// Distribution descriptor for [`rng_draw`].
#[derive(Debug, Clone, PartialEq)]
pub enum VariateSpec {
    Normal { mean: f64, sd: f64 },
    Gamma { shape: f64, scale: f64 },
    Beta { a: f64, b: f64 },
    Binomial { trials: u64, p: f64 },
    Poisson { rate: f64 },
    /// Index drawn proportionally to the (non-negative) weights.
    Categorical { weights: Vec<f64> },
}

fn domain(msg: impl Into<String>) -> NumericsError {
    NumericsError::Domain(msg.into())
}

pub fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> Result<f64, NumericsError> {
    let g = Gamma::new(shape, scale).map_err(|e| domain(format!("gamma({shape}, {scale}): {e}")))?;
    Ok(g.sample(rng))
}

/// Beta variate as `X / (X + Y)` with `X ~ Gamma(a)`, `Y ~ Gamma(b)`.
pub fn sample_beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> Result<f64, NumericsError> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(domain(format!("beta({a}, {b}) needs positive shapes")));
    }
    let ga = Gamma::new(a, 1.0).map_err(|e| domain(e.to_string()))?;
    let gb = Gamma::new(b, 1.0).map_err(|e| domain(e.to_string()))?;
    loop {
        let x = ga.sample(rng);
        let y = gb.sample(rng);
        let s = x + y;
        if s > 0.0 {
            return Ok(x / s);
        }
    }
}

pub fn sample_binomial<R: Rng + ?Sized>(rng: &mut R, trials: u64, p: f64) -> Result<u64, NumericsError> {
    let b = Binomial::new(trials, p).map_err(|e| domain(format!("binomial({trials}, {p}): {e}")))?;
    Ok(b.sample(rng))
}

pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> Result<u64, NumericsError> {
    if rate == 0.0 {
        return Ok(0);
    }
    let p = Poisson::new(rate).map_err(|e| domain(format!("poisson({rate}): {e}")))?;
    Ok(p.sample(rng) as u64)
}

impl VariateSpec {
    fn validate(&self) -> Result<(), NumericsError> {
        let ok = match self {
            VariateSpec::Normal { mean, sd } => mean.is_finite() && *sd > 0.0 && sd.is_finite(),
            VariateSpec::Gamma { shape, scale } => *shape > 0.0 && *scale > 0.0 && shape.is_finite() && scale.is_finite(),
            VariateSpec::Beta { a, b } => *a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite(),
            VariateSpec::Binomial { p, .. } => (0.0..=1.0).contains(p),
            VariateSpec::Poisson { rate } => *rate >= 0.0 && rate.is_finite(),
            VariateSpec::Categorical { weights } => {
                !weights.is_empty()
                    && weights.iter().all(|w| *w >= 0.0 && w.is_finite())
                    && weights.iter().any(|w| *w > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(domain(format!("invalid distribution parameters: {self:?}")))
        }
    }

    /// One variate; counts and category indices come back as exact `f64`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64, NumericsError> {
        self.validate()?;
        Ok(match self {
            VariateSpec::Normal { mean, sd } => {
                Normal::new(*mean, *sd).map_err(|e| domain(e.to_string()))?.sample(rng)
            }
            VariateSpec::Gamma { shape, scale } => sample_gamma(rng, *shape, *scale)?,
            VariateSpec::Beta { a, b } => sample_beta(rng, *a, *b)?,
            VariateSpec::Binomial { trials, p } => sample_binomial(rng, *trials, *p)? as f64,
            VariateSpec::Poisson { rate } => sample_poisson(rng, *rate)? as f64,
            VariateSpec::Categorical { weights } => {
                WeightedIndex::new(weights).map_err(|e| domain(e.to_string()))?.sample(rng) as f64
            }
        })
    }
}

/// First `n` variates of `dist` on `stream`.
pub fn rng_draw(stream: &RngStream, dist: &VariateSpec, n: usize) -> Result<Vec<f64>, NumericsError> {
    dist.validate()?;
    let mut rng = stream.rng();
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}
