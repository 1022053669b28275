//! Dense symmetric matrices and their Cholesky factors.
//!
//! Grid covariances are at most a few thousand rows, so a plain row-major
//! layout with an in-place lower-triangular factorization is all we need.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn trace(&self) -> T {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Lower-triangular factor `L` with `L Lᵀ = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky<T> {
    lower: Matrix<T>,
    jitter: T,
}

impl<T: Real> Cholesky<T> {
    /// Factorizes a symmetric positive-definite matrix.
    ///
    /// On failure the diagonal is loaded once with `1e-12 · trace / n` and
    /// the factorization retried; a second failure reports the leading minor
    /// that broke.
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        match factorize(a, T::zero()) {
            Ok(lower) => Ok(Self { lower, jitter: T::zero() }),
            Err(_) => {
                let jitter = T::lit(1e-12) * a.trace() / T::from_count(a.dim().max(1));
                factorize(a, jitter).map(|lower| Self { lower, jitter }).map_err(|minor| Error::NotPositiveDefinite { minor })
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.dim()
    }

    pub fn lower(&self) -> &Matrix<T> {
        &self.lower
    }

    /// Diagonal load applied during factorization (zero if none was needed).
    pub fn jitter(&self) -> T {
        self.jitter
    }

    /// `L x`.
    pub fn mul_lower(&self, x: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(x.len(), n);
        (0..n).map(|i| dot(&self.lower.row(i)[..=i], &x[..=i])).collect()
    }

    /// `Lᵀ x`.
    pub fn mul_lower_t(&self, x: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(x.len(), n);
        let mut out = vec![T::zero(); n];
        for i in 0..n {
            let xi = x[i];
            if xi == T::zero() {
                continue;
            }
            for (o, &l) in out[..=i].iter_mut().zip(&self.lower.row(i)[..=i]) {
                *o += l * xi;
            }
        }
        out
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let row = self.lower.row(i);
            let s = dot(&row[..i], &y[..i]);
            y[i] = (b[i] - s) / row[i];
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn solve_upper(&self, y: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(y.len(), n);
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.lower.get(i, i);
            let xi = x[i];
            for (xj, &l) in x[..i].iter_mut().zip(&self.lower.row(i)[..i]) {
                *xj -= l * xi;
            }
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// Reassembles `L Lᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let n = self.dim();
        Matrix::from_fn(n, |i, j| {
            let m = i.min(j) + 1;
            dot(&self.lower.row(i)[..m], &self.lower.row(j)[..m])
        })
    }

    /// `‖L Lᵀ − A‖_F / ‖A‖_F`.
    pub fn relative_residual(&self, a: &Matrix<T>) -> T {
        let r = self.reconstruct();
        let diff: T = r.as_slice().iter().zip(a.as_slice()).map(|(&x, &y)| (x - y) * (x - y)).sum();
        diff.sqrt() / a.frobenius()
    }

    /// `log det A = 2 Σ log L_ii`.
    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        (0..self.dim()).map(|i| two * self.lower.get(i, i).ln()).sum()
    }
}

fn factorize<T: Real>(a: &Matrix<T>, jitter: T) -> std::result::Result<Matrix<T>, usize> {
    let n = a.dim();
    let mut l = Matrix::zeros(n);
    for j in 0..n {
        let mut diag = a.get(j, j) + jitter;
        diag -= dot(&l.row(j)[..j], &l.row(j)[..j]);
        if !(diag > T::zero()) || !diag.is_finite() {
            return Err(j + 1);
        }
        let ljj = diag.sqrt();
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let s = a.get(i, j) - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}
