use super::linalg::{Cholesky, Matrix};
use super::{NumericsError, Real};

/// A smooth log-target with analytic gradient and Hessian.
pub trait TwiceDifferentiable<T> {
    fn dim(&self) -> usize;
    fn value(&self, x: &[T]) -> T;
    fn gradient(&self, x: &[T]) -> Vec<T>;
    fn hessian(&self, x: &[T]) -> Matrix<T>;
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions<T> {
    pub max_iterations: usize,
    /// Stop once the gradient norm falls below this.
    pub gradient_tolerance: T,
    /// Added to the negated Hessian diagonal when it fails to factor.
    pub ridge: T,
    pub max_halvings: usize,
}

impl<T: Real> Default for NewtonOptions<T> {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tolerance: T::lit(1e-8).max(T::epsilon() * T::lit(1e3)),
            ridge: T::lit(1e-10),
            max_halvings: 40,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonResult<T> {
    pub mode: Vec<T>,
    pub value: T,
    pub hessian: Matrix<T>,
    /// Cholesky factor of the negated Hessian at the mode.
    pub precision: Cholesky<T>,
    pub iterations: usize,
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

fn negated_factor<T: Real>(h: &Matrix<T>, ridge: T) -> Result<Cholesky<T>, NumericsError> {
    let neg = h.scaled(-T::one());
    match neg.cholesky() {
        Ok(c) => Ok(c),
        Err(_) => {
            let n = neg.rows();
            let mut bumped = neg;
            for i in 0..n {
                bumped[(i, i)] = bumped[(i, i)] + ridge;
            }
            bumped.cholesky().map_err(|_| NumericsError::NotConcave)
        }
    }
}

/// Maximizes a strictly concave target by Newton steps with step halving.
pub fn newton_maximize<T, F>(target: &F, start: &[T], opts: &NewtonOptions<T>) -> Result<NewtonResult<T>, NumericsError>
where
    T: Real,
    F: TwiceDifferentiable<T> + ?Sized,
{
    if start.len() != target.dim() {
        return Err(NumericsError::Dimension(format!("start has {} entries, target {}", start.len(), target.dim())));
    }
    let mut x = start.to_vec();
    let mut fx = target.value(&x);
    if !fx.is_finite() {
        return Err(NumericsError::Domain("log target is not finite at the start".into()));
    }
    let half = T::lit(0.5);
    for iteration in 0..=opts.max_iterations {
        let g = target.gradient(&x);
        let h = target.hessian(&x);
        let factor = negated_factor(&h, opts.ridge)?;
        if norm(&g) < opts.gradient_tolerance {
            return Ok(NewtonResult { mode: x, value: fx, hessian: h, precision: factor, iterations: iteration });
        }
        if iteration == opts.max_iterations {
            break;
        }
        let step = factor.solve(&g);
        // near the mode the gain of a step drops below the rounding level of
        // the target, so comparisons allow that much slack
        let slack = T::lit(8.0) * T::epsilon() * fx.abs().max(T::one());
        let mut scale = T::one();
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<T> = x.iter().zip(&step).map(|(&xi, &si)| xi + scale * si).collect();
            let ft = target.value(&trial);
            if ft.is_finite() && ft >= fx - slack {
                x = trial;
                fx = ft;
                accepted = true;
                break;
            }
            scale = scale * half;
        }
        if !accepted {
            // No ascent along the Newton direction: the iterate is a mode up
            // to rounding, unless the gradient is still far from zero.
            let g = target.gradient(&x);
            let gn = norm(&g);
            if gn < opts.gradient_tolerance.sqrt() {
                let h = target.hessian(&x);
                let factor = negated_factor(&h, opts.ridge)?;
                return Ok(NewtonResult { mode: x, value: fx, hessian: h, precision: factor, iterations: iteration + 1 });
            }
            return Err(NumericsError::NoConvergence {
                iterations: iteration + 1,
                gradient_norm: gn.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    let g = target.gradient(&x);
    Err(NumericsError::NoConvergence {
        iterations: opts.max_iterations,
        gradient_norm: norm(&g).to_f64().unwrap_or(f64::NAN),
    })
}
