//! Low end of a symmetric spectrum from Hessian-vector products.
//!
//! Lanczos with full re-orthogonalization builds a Krylov basis; when the
//! Krylov space becomes invariant (as happens for degenerate eigenvalues) a
//! fresh start vector orthogonal to the basis is injected. Ritz pairs come
//! from a dense Jacobi solve of the projected matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::vector::{axpy, dot, norm, scale};
use super::{DenseMatrix, LinearOperator};
use crate::error::{HisdError, Result};
use crate::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct EigenConfig<T> {
    /// Residual tolerance `||A v - lambda v||` for each returned pair.
    pub tol: T,
    /// Krylov basis cap; `None` runs to the full dimension.
    pub max_basis: Option<usize>,
    pub seed: u64,
}

impl<T: Scalar> Default for EigenConfig<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-8),
            max_basis: None,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult<T> {
    /// Ascending.
    pub values: Vec<T>,
    pub vectors: Vec<Vec<T>>,
    pub residuals: Vec<T>,
    pub converged: bool,
    /// Largest `|theta|` over all Ritz values of the final basis.
    pub extent: T,
}

/// Eigen-decomposition of a dense symmetric matrix by cyclic Jacobi
/// rotations. Eigenvalues ascending; vectors are unit columns.
pub fn symmetric_eigen<T: Scalar>(m: &DenseMatrix<T>) -> (Vec<T>, Vec<Vec<T>>) {
    let n = m.dim();
    let mut a = m.clone();
    let mut v = DenseMatrix::identity(n);
    let scale_ref = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .fold(T::zero(), |acc, (i, j)| acc + a[(i, j)] * a[(i, j)])
        .sqrt();
    let tiny = T::epsilon() * scale_ref.max(T::min_positive_value());

    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off = off + a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= tiny {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[(i, i)]
            .partial_cmp(&a[(j, j)])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = order
        .iter()
        .map(|&j| (0..n).map(|i| v[(i, j)]).collect())
        .collect();
    (values, vectors)
}

fn random_unit<T: Scalar>(rng: &mut ChaCha8Rng, n: usize, basis: &[Vec<T>]) -> Option<Vec<T>> {
    for _ in 0..8 {
        let mut q: Vec<T> = (0..n).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
        for _ in 0..2 {
            for b in basis {
                let c = dot(&q, b);
                axpy(-c, b, &mut q);
            }
        }
        let nq = norm(&q);
        if nq > T::lit(1e-8) {
            scale(T::one() / nq, &mut q);
            return Some(q);
        }
    }
    None
}

/// The `count` smallest eigenpairs of the symmetric operator `hessian`.
///
/// Pairs whose residual exceeds `cfg.tol` are still returned, with
/// `converged = false`.
pub fn smallest_eigpairs<T: Scalar, A: LinearOperator<T> + ?Sized>(
    hessian: &mut A,
    count: usize,
    cfg: &EigenConfig<T>,
) -> Result<EigenResult<T>> {
    let n = hessian.dim();
    if count == 0 || count > n {
        return Err(HisdError::InvalidParameter(format!(
            "eigenpair count {count} must lie in 1..={n}"
        )));
    }
    let max_basis = cfg.max_basis.unwrap_or(n).clamp(count, n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut basis: Vec<Vec<T>> = Vec::with_capacity(max_basis);
    let mut images: Vec<Vec<T>> = Vec::with_capacity(max_basis);
    let first = random_unit(&mut rng, n, &basis)
        .ok_or_else(|| HisdError::InvalidParameter("cannot draw a start vector".into()))?;
    basis.push(first);

    let mut scale_est = T::zero();
    while images.len() < max_basis {
        let j = images.len();
        let mut w = vec![T::zero(); n];
        hessian.apply(&basis[j], &mut w);
        if !w.iter().all(|x| x.is_finite()) {
            return Err(HisdError::NumericalBreakdown { iteration: j + 1 });
        }
        images.push(w.clone());
        if images.len() == max_basis {
            break;
        }
        scale_est = scale_est.max(norm(&w));
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                axpy(-c, q, &mut w);
            }
        }
        let beta = norm(&w);
        if beta > T::lit(1e-10) * scale_est.max(T::one()) {
            scale(T::one() / beta, &mut w);
            basis.push(w);
        } else {
            match random_unit(&mut rng, n, &basis) {
                Some(q) => basis.push(q),
                None => break,
            }
        }
    }

    let m = images.len();
    let mut proj = DenseMatrix::zeros(m);
    for i in 0..m {
        for j in 0..m {
            proj[(i, j)] = dot(&basis[i], &images[j]);
        }
    }
    let sym = {
        let t = proj.transpose();
        let mut s = DenseMatrix::zeros(m);
        for i in 0..m {
            for j in 0..m {
                s[(i, j)] = (proj[(i, j)] + t[(i, j)]) * T::lit(0.5);
            }
        }
        s
    };
    let (theta, coeffs) = symmetric_eigen(&sym);
    let extent = theta.iter().fold(T::zero(), |m, t| m.max(t.abs()));

    let mut values = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    let mut residuals = Vec::with_capacity(count);
    for (lambda, s) in theta.into_iter().zip(coeffs).take(count) {
        let mut y = vec![T::zero(); n];
        let mut ay = vec![T::zero(); n];
        for (k, &sk) in s.iter().enumerate() {
            axpy(sk, &basis[k], &mut y);
            axpy(sk, &images[k], &mut ay);
        }
        let ny = norm(&y);
        scale(T::one() / ny, &mut y);
        scale(T::one() / ny, &mut ay);
        axpy(-lambda, &y, &mut ay);
        residuals.push(norm(&ay));
        values.push(lambda);
        vectors.push(y);
    }
    let converged = residuals.iter().all(|&r| r <= cfg.tol);
    Ok(EigenResult {
        values,
        vectors,
        residuals,
        converged,
        extent,
    })
}
