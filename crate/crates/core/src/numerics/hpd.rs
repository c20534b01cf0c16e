use serde::{Deserialize, Serialize};

use super::{NumericsError, Real};

/// Minimum sample size accepted by [`hpd_interval`].
pub const MIN_HPD_SAMPLES: usize = 10;

/// Shortest interval holding a given fraction of an empirical sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpdInterval<T> {
    pub lower: T,
    pub upper: T,
    pub mass: T,
}

impl<T: Real> HpdInterval<T> {
    pub fn width(&self) -> T {
        self.upper - self.lower
    }

    /// Closed-interval membership.
    pub fn contains(&self, x: T) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Number of order statistics an interval of `mass` must cover.
fn window_len<T: Real>(n: usize, mass: T) -> usize {
    let nf = T::from_usize(n).expect("sample size fits the scalar type");
    // guard against mass·n landing a rounding error above an integer
    let raw = (mass * nf - T::epsilon() * nf * T::lit(4.0)).ceil();
    raw.to_usize().unwrap_or(n).clamp(1, n)
}

/// Leftmost shortest window of `ceil(mass·n)` consecutive values of an
/// ascending slice. No minimum sample size.
pub fn shortest_window<T: Real>(sorted: &[T], mass: T) -> Result<HpdInterval<T>, NumericsError> {
    if sorted.is_empty() {
        return Err(NumericsError::InsufficientData { needed: 1, got: 0 });
    }
    if !(mass > T::zero() && mass < T::one()) {
        return Err(NumericsError::Domain("interval mass must lie in (0, 1)".into()));
    }
    let n = sorted.len();
    let m = window_len(n, mass);
    let mut best = 0;
    let mut best_width = sorted[m - 1] - sorted[0];
    for i in 1..=n - m {
        let w = sorted[i + m - 1] - sorted[i];
        if w < best_width {
            best = i;
            best_width = w;
        }
    }
    Ok(HpdInterval { lower: sorted[best], upper: sorted[best + m - 1], mass })
}

/// Empirical highest-density interval of `samples`.
pub fn hpd_interval<T: Real>(samples: &[T], mass: T) -> Result<HpdInterval<T>, NumericsError> {
    if samples.len() < MIN_HPD_SAMPLES {
        return Err(NumericsError::InsufficientData { needed: MIN_HPD_SAMPLES, got: samples.len() });
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(NumericsError::Domain("samples contain NaN".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN filtered above"));
    shortest_window(&sorted, mass)
}

/// Fraction of samples strictly greater than `threshold`.
pub fn empirical_survival_at<T: Real>(samples: &[T], threshold: T) -> Result<T, NumericsError> {
    if samples.is_empty() {
        return Err(NumericsError::InsufficientData { needed: 1, got: 0 });
    }
    let above = samples.iter().filter(|&&x| x > threshold).count();
    Ok(T::from_usize(above).unwrap() / T::from_usize(samples.len()).unwrap())
}

/// Fraction of samples less than or equal to `threshold`.
pub fn empirical_fraction_at_or_below<T: Real>(samples: &[T], threshold: T) -> Result<T, NumericsError> {
    if samples.is_empty() {
        return Err(NumericsError::InsufficientData { needed: 1, got: 0 });
    }
    let below = samples.iter().filter(|&&x| x <= threshold).count();
    Ok(T::from_usize(below).unwrap() / T::from_usize(samples.len()).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_ladder_takes_leftmost_window() {
        let s: Vec<f64> = (0..10).map(f64::from).collect();
        let h = hpd_interval(&s, 0.5).unwrap();
        assert_eq!((h.lower, h.upper), (0.0, 4.0));
    }

    #[test]
    fn outlier_is_excluded() {
        let h = shortest_window(&[0.0, 0.1, 0.2, 0.3, 10.0], 0.8).unwrap();
        assert_eq!((h.lower, h.upper), (0.0, 0.3));
    }

    #[test]
    fn short_samples_are_rejected() {
        let err = hpd_interval(&[0.0, 0.1, 0.2, 0.3, 10.0], 0.8).unwrap_err();
        assert_eq!(err, NumericsError::InsufficientData { needed: 10, got: 5 });
        assert!(hpd_interval(&[0.0; 20], 1.0).is_err());
    }

    #[test]
    fn survival_counts() {
        assert_eq!(empirical_survival_at(&[-1.0, 2.0, 3.0, -0.5], 0.0).unwrap(), 0.5);
        assert_eq!(empirical_survival_at(&[1.0, 2.0, 3.0], 0.0).unwrap(), 1.0);
        assert_eq!(empirical_survival_at(&[0.0, 0.0, 0.0], 0.0).unwrap(), 0.0);
        assert!(empirical_survival_at::<f64>(&[], 0.0).is_err());
    }
}
