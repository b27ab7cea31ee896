//! Dense vector kernels on plain slices.

use crate::Scalar;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn norm_inf<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

#[inline]
pub fn scale<T: Scalar>(alpha: T, x: &mut [T]) {
    for xi in x.iter_mut() {
        *xi = *xi * alpha;
    }
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}

pub fn all_finite<T: Scalar>(a: &[T]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Applies the reflection `(I - 2 sum_j v_j v_j^T)` to `x` in place.
///
/// The vectors in `frame` must be orthonormal for this to be a reflection.
pub fn reflect<T: Scalar>(frame: &[Vec<T>], x: &mut [T]) {
    let two = T::lit(2.0);
    let coeffs: Vec<T> = frame.iter().map(|v| dot(v, x)).collect();
    for (v, c) in frame.iter().zip(coeffs) {
        axpy(-two * c, v, x);
    }
}

/// Largest entry of `|V^T V - I|`.
pub fn orthonormality_defect<T: Scalar>(frame: &[Vec<T>]) -> T {
    let mut worst = T::zero();
    for (i, vi) in frame.iter().enumerate() {
        for (j, vj) in frame.iter().enumerate().skip(i) {
            let target = if i == j { T::one() } else { T::zero() };
            worst = worst.max((dot(vi, vj) - target).abs());
        }
    }
    worst
}
