use super::{NumericsError, Real};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

// Stirling remainder ln Γ(x) - [(x - 1/2) ln x - x + ln √(2π)], valid for x >= 10.
fn stirling_remainder(x: f64) -> f64 {
    const C: [f64; 7] = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360_360.0,
        1.0 / 156.0,
    ];
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut acc = 0.0;
    for c in C.iter().rev() {
        acc = acc * inv2 + c;
    }
    acc * inv
}

/// `ln B(a, b)` without argument checks.
///
/// Large arguments go through the Stirling remainder so that the leading
/// `x ln x` terms cancel analytically instead of in floating point.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    let (p, q) = if a < b { (a, b) } else { (b, a) };
    if p >= 10.0 {
        let corr = stirling_remainder(p) + stirling_remainder(q) - stirling_remainder(p + q);
        let r = p / (p + q);
        -0.5 * q.ln() + LN_SQRT_2PI + corr + (p - 0.5) * r.ln() + q * (-r).ln_1p()
    } else if q >= 10.0 {
        let corr = stirling_remainder(q) - stirling_remainder(p + q);
        log_gamma(p) + corr + p - p * (p + q).ln() + (q - 0.5) * (-p / (p + q)).ln_1p()
    } else {
        log_gamma(p) + log_gamma(q) - log_gamma(p + q)
    }
}

/// `ln B(a, b)`; both shapes must be strictly positive and finite.
pub fn log_beta(a: f64, b: f64) -> Result<f64, NumericsError> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(NumericsError::Domain(format!("log_beta requires a, b > 0 (got {a}, {b})")));
    }
    Ok(ln_beta(a, b))
}

/// `ln C(n, k)` for `0 <= k <= n`.
pub fn log_binomial_coef(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    if k == 0 || k == n {
        return 0.0;
    }
    let (n, k) = (n as f64, k as f64);
    -(n + 1.0).ln() - ln_beta(n - k + 1.0, k + 1.0)
}

/// Log density of `Beta(a, b)` at `x` in the open unit interval.
pub fn log_beta_density(x: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)
}

/// Numerically stable `ln Σ exp(v)`. Empty input gives `-inf`.
pub fn log_sum_exp<T: Real>(values: &[T]) -> T {
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() || !max.is_finite() {
        return max;
    }
    let sum = values.iter().fold(T::zero(), |acc, &v| acc + (v - max).exp());
    max + sum.ln()
}
