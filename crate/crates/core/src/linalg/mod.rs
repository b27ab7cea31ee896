//! Dense kernels, matrix-free GMRES, sequential Gram-Schmidt and a
//! Lanczos estimator for the low end of a symmetric spectrum.

pub mod eigen;
pub mod gmres;
pub mod gram_schmidt;
pub mod vector;

pub use eigen::{smallest_eigpairs, symmetric_eigen, EigenConfig, EigenResult};
pub use gmres::{gmres_solve, GmresConfig, GmresReport};
pub use gram_schmidt::{gram_schmidt_append, orthonormalize, pythagorean_residual_norm};

use crate::Scalar;

/// A square linear map applied without materializing its matrix.
pub trait LinearOperator<T: Scalar> {
    fn dim(&self) -> usize;

    /// Writes `A x` into `y`.
    fn apply(&mut self, x: &[T], y: &mut [T]);

    /// Model force queries consumed by one application.
    fn query_cost(&self) -> usize {
        0
    }
}

/// Adapts a closure into a [`LinearOperator`].
pub struct FnOperator<F> {
    dim: usize,
    cost: usize,
    f: F,
}

impl<F> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, cost: 0, f }
    }

    pub fn with_query_cost(mut self, cost: usize) -> Self {
        self.cost = cost;
        self
    }
}

impl<T: Scalar, F: FnMut(&[T], &mut [T])> LinearOperator<T> for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&mut self, x: &[T], y: &mut [T]) {
        (self.f)(x, y)
    }

    fn query_cost(&self) -> usize {
        self.cost
    }
}

/// Row-major dense square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        m
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Materializes an operator column by column.
    pub fn from_operator(op: &mut impl LinearOperator<T>) -> Self {
        let n = op.dim();
        let mut m = Self::zeros(n);
        let mut e = vec![T::zero(); n];
        let mut col = vec![T::zero(); n];
        for j in 0..n {
            e[j] = T::one();
            op.apply(&e, &mut col);
            e[j] = T::zero();
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = vector::dot(&self.data[i * self.n..(i + 1) * self.n], x);
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Spectral norm estimate by power iteration on `A^T A`.
    pub fn norm2_estimate(&self, iters: usize) -> T {
        let n = self.n;
        let at = self.transpose();
        let mut x = vec![T::one(); n];
        let mut y = vec![T::zero(); n];
        let mut z = vec![T::zero(); n];
        let mut est = T::zero();
        for _ in 0..iters {
            let nx = vector::norm(&x);
            if nx == T::zero() {
                return T::zero();
            }
            vector::scale(T::one() / nx, &mut x);
            self.matvec(&x, &mut y);
            at.matvec(&y, &mut z);
            est = vector::norm(&y);
            std::mem::swap(&mut x, &mut z);
        }
        est
    }

    /// Solves `A x = b` by LU with partial pivoting. Returns `None` if singular.
    pub fn lu_solve(&self, b: &[T]) -> Option<Vec<T>> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| {
                a[i * n + k]
                    .abs()
                    .partial_cmp(&a[j * n + k].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })?;
            if a[p * n + k] == T::zero() {
                return None;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                x.swap(k, p);
            }
            for i in k + 1..n {
                let f = a[i * n + k] / a[k * n + k];
                for j in k..n {
                    a[i * n + j] = a[i * n + j] - f * a[k * n + j];
                }
                x[i] = x[i] - f * x[k];
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s = s - a[i * n + j] * x[j];
            }
            x[i] = s / a[i * n + i];
        }
        Some(x)
    }
}

impl<T> std::ops::Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

impl<T: Scalar> LinearOperator<T> for DenseMatrix<T> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&mut self, x: &[T], y: &mut [T]) {
        self.matvec(x, y)
    }
}
