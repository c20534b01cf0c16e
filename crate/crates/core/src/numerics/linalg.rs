//! Small dense matrices. GLM designs have a handful of columns, so plain
//! row-major storage with hand-written factorizations is all that is needed.

use std::ops::{Index, IndexMut};

use super::{NumericsError, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds from row slices; all rows must share one length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, NumericsError> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NumericsError::Dimension("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `Xᵀ X`.
    pub fn gram(&self) -> Self {
        let mut g = Self::zeros(self.cols, self.cols);
        for i in 0..self.rows {
            let r = self.row(i);
            for a in 0..self.cols {
                for b in a..self.cols {
                    g[(a, b)] = g[(a, b)] + r[a] * r[b];
                }
            }
        }
        for a in 0..self.cols {
            for b in 0..a {
                g[(a, b)] = g[(b, a)];
            }
        }
        g
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| x * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn cholesky(&self) -> Result<Cholesky<T>, NumericsError> {
        Cholesky::new(self)
    }

    /// Numerical rank from a diagonally pivoted Cholesky factorization of
    /// `Xᵀ X`, with pivots below `tol · max pivot` treated as zero.
    pub fn column_rank(&self, tol: T) -> usize {
        let mut a = self.gram();
        let n = a.rows;
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.diagonal().into_iter().fold(T::zero(), T::max);
        if scale <= T::zero() {
            return 0;
        }
        let threshold = tol * scale;
        for k in 0..n {
            // pivot on the largest remaining diagonal entry
            let (p, best) = (k..n).map(|i| (i, a[(perm[i], perm[i])])).fold((k, T::neg_infinity()), |acc, x| {
                if x.1 > acc.1 {
                    x
                } else {
                    acc
                }
            });
            if best <= threshold {
                return k;
            }
            perm.swap(k, p);
            let pk = perm[k];
            let d = a[(pk, pk)].sqrt();
            for &pi in &perm[k + 1..] {
                a[(pi, pk)] = a[(pi, pk)] / d;
            }
            for i in k + 1..n {
                let pi = perm[i];
                for j in k + 1..=i {
                    let pj = perm[j];
                    let v = a[(pi, pj)] - a[(pi, pk)] * a[(pj, pk)];
                    a[(pi, pj)] = v;
                    a[(pj, pi)] = v;
                }
            }
        }
        n
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn new(a: &Matrix<T>) -> Result<Self, NumericsError> {
        if !a.is_square() {
            return Err(NumericsError::Dimension("cholesky of a non-square matrix".into()));
        }
        let n = a.rows();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d = d - l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(NumericsError::NotPositiveDefinite);
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &Matrix<T> {
        &self.l
    }

    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        self.l.diagonal().into_iter().fold(T::zero(), |acc, d| acc + two * d.ln())
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.l.rows();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn solve_upper(&self, y: &[T]) -> Vec<T> {
        let n = self.l.rows();
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s = s - self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `L z`, used to colour standard-normal draws.
    pub fn lower_mul(&self, z: &[T]) -> Vec<T> {
        let n = self.l.rows();
        (0..n).map(|i| (0..=i).fold(T::zero(), |acc, k| acc + self.l[(i, k)] * z[k])).collect()
    }

    /// `A⁻¹`.
    pub fn inverse(&self) -> Matrix<T> {
        let n = self.l.rows();
        let mut inv = Matrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}
