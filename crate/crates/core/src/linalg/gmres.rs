//! Matrix-free GMRES (Arnoldi with modified Gram-Schmidt, Givens rotations).
//!
//! The initial guess is always zero, so the recorded relative residuals are
//! `||b - A x_m|| / ||b||` and obey the polynomial bound
//! `||r_m|| / ||b|| <= min_{p(0)=1} ||p(A)||`.

use serde::{Deserialize, Serialize};

use super::vector::{axpy, dot, norm, scale};
use super::LinearOperator;
use crate::error::{check_dim, HisdError, Result};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmresConfig<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    /// Iteration cap; `None` means the system dimension.
    pub max_iter: Option<usize>,
    /// Krylov dimension before restart; `None` disables restarting.
    pub restart: Option<usize>,
}

impl<T: Scalar> Default for GmresConfig<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::lit(1e-10),
            abs_tol: T::lit(1e-14),
            max_iter: None,
            restart: None,
        }
    }
}

impl<T: Scalar> GmresConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > T::zero() && self.rel_tol < T::one()) {
            return Err(HisdError::InvalidParameter(format!(
                "GMRES rel_tol must lie in (0, 1), got {}",
                self.rel_tol
            )));
        }
        if self.abs_tol < T::zero() {
            return Err(HisdError::InvalidParameter(
                "GMRES abs_tol must be >= 0".into(),
            ));
        }
        if self.max_iter == Some(0) || self.restart == Some(0) {
            return Err(HisdError::InvalidParameter(
                "GMRES max_iter and restart must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmresReport<T> {
    pub iterations: usize,
    /// `||r_j|| / ||b||` for `j = 0..=iterations`, starting at 1.
    pub residual_history: Vec<T>,
    pub converged: bool,
}

impl<T: Scalar> GmresReport<T> {
    pub fn final_relative_residual(&self) -> T {
        self.residual_history
            .last()
            .copied()
            .unwrap_or_else(T::zero)
    }
}

fn givens<T: Scalar>(a: T, b: T) -> (T, T) {
    if b == T::zero() {
        (T::one(), T::zero())
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

/// Solves `A x = b` starting from `x = 0`.
pub fn gmres_solve<T: Scalar, A: LinearOperator<T> + ?Sized>(
    a: &mut A,
    b: &[T],
    cfg: &GmresConfig<T>,
) -> Result<(Vec<T>, GmresReport<T>)> {
    cfg.validate()?;
    let n = a.dim();
    check_dim(n, b.len())?;

    let mut x = vec![T::zero(); n];
    let b_norm = norm(b);
    if !b_norm.is_finite() {
        return Err(HisdError::NumericalBreakdown { iteration: 0 });
    }
    if b_norm == T::zero() {
        return Ok((
            x,
            GmresReport {
                iterations: 0,
                residual_history: vec![T::zero()],
                converged: true,
            },
        ));
    }

    let target = (cfg.rel_tol * b_norm).max(cfg.abs_tol);
    let max_iter = cfg.max_iter.unwrap_or(n).max(1);
    let cycle_len = cfg.restart.unwrap_or(max_iter).min(max_iter).max(1);
    let breakdown_tol = T::epsilon() * b_norm;

    let mut history = vec![T::one()];
    let mut total = 0usize;
    let mut r = b.to_vec();
    let mut w = vec![T::zero(); n];

    loop {
        let beta = norm(&r);
        if beta <= target {
            return Ok((x, report(total, history, true)));
        }

        let m = cycle_len.min(max_iter - total);
        let mut basis: Vec<Vec<T>> = Vec::with_capacity(m + 1);
        let mut v0 = r.clone();
        scale(T::one() / beta, &mut v0);
        basis.push(v0);

        // Column-major Hessenberg: h[j] holds column j (length j + 2).
        let mut h: Vec<Vec<T>> = Vec::with_capacity(m);
        let mut cs: Vec<(T, T)> = Vec::with_capacity(m);
        let mut g = vec![T::zero(); m + 1];
        g[0] = beta;

        let mut steps = 0;
        let mut residual = beta;
        for j in 0..m {
            a.apply(&basis[j], &mut w);
            total += 1;
            if !w.iter().all(|v| v.is_finite()) {
                return Err(HisdError::NumericalBreakdown { iteration: total });
            }

            let mut col = vec![T::zero(); j + 2];
            let w_norm0 = norm(&w);
            for (i, q) in basis.iter().enumerate() {
                let hij = dot(&w, q);
                col[i] = hij;
                axpy(-hij, q, &mut w);
            }
            // One re-orthogonalization pass when cancellation is severe.
            if norm(&w) < T::lit(0.5) * w_norm0 {
                for (i, q) in basis.iter().enumerate() {
                    let c = dot(&w, q);
                    col[i] = col[i] + c;
                    axpy(-c, q, &mut w);
                }
            }
            let h_next = norm(&w);
            col[j + 1] = h_next;

            for (i, &(c, s)) in cs.iter().enumerate() {
                let (p, q) = (col[i], col[i + 1]);
                col[i] = c * p + s * q;
                col[i + 1] = -s * p + c * q;
            }
            let (c, s) = givens(col[j], col[j + 1]);
            col[j] = c * col[j] + s * col[j + 1];
            col[j + 1] = T::zero();
            cs.push((c, s));
            g[j + 1] = -s * g[j];
            g[j] = c * g[j];

            if !col[j].is_finite() || !g[j + 1].is_finite() {
                return Err(HisdError::NumericalBreakdown { iteration: total });
            }

            h.push(col);
            steps = j + 1;
            residual = g[j + 1].abs();
            history.push(residual / b_norm);

            if residual <= target || h_next <= breakdown_tol || total >= max_iter {
                break;
            }
            let mut next = w.clone();
            scale(T::one() / h_next, &mut next);
            basis.push(next);
        }

        // Back substitution on the rotated (upper triangular) Hessenberg.
        let mut y = vec![T::zero(); steps];
        for i in (0..steps).rev() {
            let mut s = g[i];
            for k in i + 1..steps {
                s = s - h[k][i] * y[k];
            }
            if h[i][i] == T::zero() {
                return Err(HisdError::NumericalBreakdown { iteration: total });
            }
            y[i] = s / h[i][i];
        }
        for (yi, q) in y.iter().zip(&basis) {
            axpy(*yi, q, &mut x);
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(HisdError::NumericalBreakdown { iteration: total });
        }

        if residual <= target {
            return Ok((x, report(total, history, true)));
        }
        if total >= max_iter {
            return Ok((x, report(total, history, false)));
        }
        if steps < m {
            // Lucky breakdown without reaching the target: the Krylov space is
            // invariant and the residual cannot decrease further.
            return Ok((x, report(total, history, false)));
        }

        // Restart from the true residual.
        a.apply(&x, &mut w);
        for ((ri, &bi), &wi) in r.iter_mut().zip(b).zip(&w) {
            *ri = bi - wi;
        }
    }
}

fn report<T>(iterations: usize, residual_history: Vec<T>, converged: bool) -> GmresReport<T> {
    GmresReport {
        iterations,
        residual_history,
        converged,
    }
}
