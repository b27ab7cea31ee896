//! Sequential Gram-Schmidt for appending one direction to an orthonormal set.

use super::vector::{axpy, dot, norm, scale};
use crate::error::{check_dim, HisdError, Result};
use crate::Scalar;

/// Residual norm below which a direction is treated as lost.
pub const BREAKDOWN_THRESHOLD: f64 = 1e-12;

/// Orthonormalizes `v_tilde` against `basis`, returning the unit vector and
/// the residual norm `Y`.
///
/// Uses modified Gram-Schmidt with a second pass when the first pass removes
/// more than half of the norm.
pub fn gram_schmidt_append<T: Scalar>(v_tilde: &[T], basis: &[Vec<T>]) -> Result<(Vec<T>, T)> {
    for b in basis {
        check_dim(v_tilde.len(), b.len())?;
    }
    let mut w = v_tilde.to_vec();
    let before = norm(&w);
    for b in basis {
        let c = dot(&w, b);
        axpy(-c, b, &mut w);
    }
    if norm(&w) < T::lit(0.5) * before {
        for b in basis {
            let c = dot(&w, b);
            axpy(-c, b, &mut w);
        }
    }
    let y = norm(&w);
    if !y.is_finite() || y < T::lit(BREAKDOWN_THRESHOLD) {
        return Err(HisdError::DegenerateDirection {
            residual: y.to_f64_lossy(),
        });
    }
    scale(T::one() / y, &mut w);
    Ok((w, y))
}

/// `(||v||^2 - sum_j (v^T b_j)^2)^{1/2}`: algebraically equal to the
/// Gram-Schmidt residual norm, but prone to cancellation.
pub fn pythagorean_residual_norm<T: Scalar>(v_tilde: &[T], basis: &[Vec<T>]) -> T {
    let total = dot(v_tilde, v_tilde);
    let proj: T = basis
        .iter()
        .map(|b| {
            let c = dot(v_tilde, b);
            c * c
        })
        .sum();
    (total - proj).max(T::zero()).sqrt()
}

/// Orthonormalizes `frame` in order.
pub fn orthonormalize<T: Scalar>(frame: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    let mut out: Vec<Vec<T>> = Vec::with_capacity(frame.len());
    for v in frame {
        let (u, _) = gram_schmidt_append(v, &out)?;
        out.push(u);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_unit_vector_is_unchanged() {
        let basis = vec![vec![1.0, 0.0, 0.0]];
        let (v, y) = gram_schmidt_append(&[0.0, 0.6, 0.8], &basis).unwrap();
        assert_eq!(v, vec![0.0, 0.6, 0.8]);
        assert_eq!(y, 1.0);
    }

    #[test]
    fn removes_component_along_basis() {
        let basis = vec![vec![1.0, 0.0, 0.0]];
        let (v, y) = gram_schmidt_append(&[1.0, 1.0, 0.0], &basis).unwrap();
        assert_eq!(v, vec![0.0, 1.0, 0.0]);
        assert_eq!(y, 1.0);
    }

    #[test]
    fn vector_in_span_is_degenerate() {
        let basis = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let err = gram_schmidt_append(&[0.3, -0.2], &basis).unwrap_err();
        assert!(matches!(err, HisdError::DegenerateDirection { .. }));
    }

    #[test]
    fn empty_basis_normalizes() {
        let (v, y) = gram_schmidt_append(&[3.0f32, 4.0], &[]).unwrap();
        assert_eq!(y, 5.0);
        assert!((v[0] - 0.6).abs() < 1e-7 && (v[1] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn mismatched_basis_dimension() {
        assert!(matches!(
            gram_schmidt_append(&[1.0, 0.0], &[vec![1.0, 0.0, 0.0]]),
            Err(HisdError::DimensionMismatch { .. })
        ));
    }
}
