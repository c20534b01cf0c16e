use rand::Rng;
use statrs::function::beta::beta_reg;

use super::{BetaShape, DeltaCurve, ModelError};
use crate::numerics::{log_sum_exp, StreamRng};

/// Number of equal-width cells in the δ sampling grid.
pub const DELTA_GRID_POINTS: usize = 2048;

/// Lower end of the δ sampling grid for the Gaussian family, whose flat
/// prior makes δ = 0 improper.
pub const GAUSSIAN_DELTA_FLOOR: f64 = 1e-6;

// cells at each end whose prior mass uses the incomplete beta function
const EXACT_END_CELLS: usize = 4;

/// Discretized marginal posterior of δ, `∝ exp(g(δ)) Beta(δ|η,ν)`, on equal
/// cells of `[lo, 1]`. Cell masses use `g` at the midpoint and the exact Beta
/// mass near the ends, where the prior may be unbounded.
#[derive(Debug, Clone)]
pub struct DeltaGrid {
    lo: f64,
    width: f64,
    probabilities: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DeltaGrid {
    pub fn new<C: DeltaCurve + ?Sized>(curve: &C, shape: BetaShape, lo: f64) -> Result<Self, ModelError> {
        Self::with_cells(curve, shape, lo, DELTA_GRID_POINTS)
    }

    pub fn with_cells<C: DeltaCurve + ?Sized>(
        curve: &C,
        shape: BetaShape,
        lo: f64,
        cells: usize,
    ) -> Result<Self, ModelError> {
        assert!(cells >= 2 && (0.0..1.0).contains(&lo));
        let (a, b) = (shape.eta(), shape.nu());
        let lb = shape.log_beta();
        let width = (1.0 - lo) / cells as f64;
        let mut log_mass = Vec::with_capacity(cells);
        for i in 0..cells {
            let left = lo + i as f64 * width;
            let right = if i + 1 == cells { 1.0 } else { left + width };
            let mid = 0.5 * (left + right);
            let prior = if i < EXACT_END_CELLS {
                (beta_reg(a, b, right) - beta_reg(a, b, left)).max(0.0).ln()
            } else if i + EXACT_END_CELLS >= cells {
                (beta_reg(b, a, 1.0 - left) - beta_reg(b, a, 1.0 - right)).max(0.0).ln()
            } else {
                (a - 1.0) * mid.ln() + (b - 1.0) * (-mid).ln_1p() - lb + width.ln()
            };
            let g = curve.log_g(mid);
            if g.is_nan() || g == f64::INFINITY {
                return Err(ModelError::Numerics(crate::numerics::NumericsError::NonFiniteIntegrand {
                    node: mid,
                    value: g,
                }));
            }
            log_mass.push(g + prior);
        }
        let total = log_sum_exp(&log_mass);
        if !total.is_finite() {
            return Err(ModelError::Parameterization("δ posterior has no mass on the grid".into()));
        }
        let probabilities: Vec<f64> = log_mass.iter().map(|&l| (l - total).exp()).collect();
        let mut acc = 0.0;
        let cumulative = probabilities
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { lo, width, probabilities, cumulative })
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Normalized cell probabilities.
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// `[left, right)` bounds of cell `i`.
    pub fn cell(&self, i: usize) -> (f64, f64) {
        let left = self.lo + i as f64 * self.width;
        let right = if i + 1 == self.len() { 1.0 } else { left + self.width };
        (left, right)
    }

    /// Index of the cell containing `delta`.
    pub fn cell_of(&self, delta: f64) -> usize {
        (((delta - self.lo) / self.width).floor().max(0.0) as usize).min(self.len() - 1)
    }

    /// Posterior mean of δ under the discretization.
    pub fn mean(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let (l, r) = self.cell(i);
                self.probabilities[i] * 0.5 * (l + r)
            })
            .sum()
    }

    /// Inverse-CDF cell choice, then a uniform position within the cell.
    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        let total = *self.cumulative.last().expect("non-empty grid");
        let u: f64 = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.len() - 1);
        let (l, r) = self.cell(i);
        let v: f64 = rng.random();
        (l + v * (r - l)).clamp(l, r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Flat;
    impl DeltaCurve for Flat {
        fn log_g(&self, _d: f64) -> f64 {
            0.0
        }
    }

    #[test]
    fn flat_curve_reproduces_the_prior() {
        let shape = BetaShape::new(0.5, 6.0).unwrap();
        let grid = DeltaGrid::new(&Flat, shape, 0.0).unwrap();
        let s: f64 = grid.probabilities().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!((grid.mean() - shape.mean()).abs() < 1e-4);
    }

    #[test]
    fn samples_follow_cell_masses() {
        let shape = BetaShape::new(2.0, 3.0).unwrap();
        let grid = DeltaGrid::with_cells(&Flat, shape, 0.0, 16).unwrap();
        let mut rng = crate::numerics::RngStream::new(3, [0, 0, 99]).rng();
        let n = 100_000;
        let mut counts = [0usize; 16];
        for _ in 0..n {
            let d = grid.sample(&mut rng);
            assert!((0.0..=1.0).contains(&d));
            counts[grid.cell_of(d)] += 1;
        }
        let tv: f64 =
            0.5 * counts.iter().zip(grid.probabilities()).map(|(&c, p)| (c as f64 / n as f64 - p).abs()).sum::<f64>();
        assert!(tv < 0.01, "tv {tv}");
    }
}
