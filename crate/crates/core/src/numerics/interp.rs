use super::Real;

/// Shape-preserving piecewise cubic Hermite interpolant (Fritsch–Carlson
/// slopes). Monotone data stay monotone between knots.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic<T> {
    xs: Vec<T>,
    ys: Vec<T>,
    slopes: Vec<T>,
}

impl<T: Real> MonotoneCubic<T> {
    /// `xs` must be strictly increasing with at least two knots.
    pub fn new(xs: Vec<T>, ys: Vec<T>) -> Self {
        assert!(xs.len() >= 2 && xs.len() == ys.len(), "need matching knots");
        assert!(xs.windows(2).all(|w| w[0] < w[1]), "knots must increase");
        let n = xs.len();
        let h: Vec<T> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let d: Vec<T> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let mut m = vec![T::zero(); n];
        let two = T::lit(2.0);
        for i in 1..n - 1 {
            if d[i - 1] * d[i] > T::zero() {
                let w1 = two * h[i] + h[i - 1];
                let w2 = h[i] + two * h[i - 1];
                m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
            }
        }
        m[0] = end_slope(h[0], h.get(1).copied().unwrap_or(h[0]), d[0], d.get(1).copied().unwrap_or(d[0]));
        m[n - 1] = end_slope(
            h[n - 2],
            if n > 2 { h[n - 3] } else { h[n - 2] },
            d[n - 2],
            if n > 2 { d[n - 3] } else { d[n - 2] },
        );
        Self { xs, ys, slopes: m }
    }

    pub fn knots(&self) -> &[T] {
        &self.xs
    }

    pub fn values(&self) -> &[T] {
        &self.ys
    }

    /// Evaluates the interpolant; outside the knot range the end value is held.
    pub fn eval(&self, x: T) -> T {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = match self.xs.binary_search_by(|k| k.partial_cmp(&x).expect("finite knots")) {
            Ok(i) => return self.ys[i],
            Err(i) => i - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let one = T::one();
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = two * t3 - three * t2 + one;
        let h10 = t3 - two * t2 + t;
        let h01 = -two * t3 + three * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

/// Piecewise cubic through the four knots nearest each interval (one-sided
/// at the ends). Fourth-order accurate on smooth data but not
/// shape-preserving.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalCubic<T> {
    xs: Vec<T>,
    ys: Vec<T>,
}

impl<T: Real> LocalCubic<T> {
    /// `xs` must be strictly increasing with at least four knots.
    pub fn new(xs: Vec<T>, ys: Vec<T>) -> Self {
        assert!(xs.len() >= 4 && xs.len() == ys.len(), "need at least four matching knots");
        assert!(xs.windows(2).all(|w| w[0] < w[1]), "knots must increase");
        Self { xs, ys }
    }

    pub fn knots(&self) -> &[T] {
        &self.xs
    }

    pub fn values(&self) -> &[T] {
        &self.ys
    }

    /// Evaluates the interpolant; outside the knot range the end value is held.
    pub fn eval(&self, x: T) -> T {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.xs.partition_point(|&k| k <= x) - 1;
        let start = i.saturating_sub(1).min(n - 4);
        let xs = &self.xs[start..start + 4];
        let ys = &self.ys[start..start + 4];
        let mut acc = T::zero();
        for j in 0..4 {
            let mut basis = T::one();
            for k in 0..4 {
                if k != j {
                    basis = basis * (x - xs[k]) / (xs[j] - xs[k]);
                }
            }
            acc = acc + basis * ys[j];
        }
        acc
    }
}

// Three-point end slope, limited so the end interval keeps its shape.
fn end_slope<T: Real>(h0: T, h1: T, d0: T, d1: T) -> T {
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let mut m = ((two * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= T::zero() {
        m = T::zero();
    } else if d0 * d1 <= T::zero() && m.abs() > (three * d0).abs() {
        m = three * d0;
    }
    m
}
