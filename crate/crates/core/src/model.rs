//! Gradient systems `F = -grad E = L x + N(x)` and instrumented evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, HisdError, Result};
use crate::linalg::vector::{axpy, norm, scale};
use crate::linalg::LinearOperator;
use crate::Scalar;

/// Discrete symmetries that map stationary points onto stationary points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symmetry {
    None,
    /// Cyclic shifts and mirror reflection of a periodic 1-D grid.
    CyclicMirror,
}

/// A gradient system whose force splits into a linear and a nonlinear part.
///
/// Implementations are immutable and shared between concurrent runs; all
/// query accounting happens in [`Evaluator`].
pub trait EnergyModel<T: Scalar>: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// `E(x)`, when the model has an energy.
    fn energy(&self, _x: &[T]) -> Option<T> {
        None
    }

    /// `out = L x`.
    fn apply_linear(&self, x: &[T], out: &mut [T]);

    /// `out = N(x)`.
    fn apply_nonlinear(&self, x: &[T], out: &mut [T]);

    /// `J(x) v = -grad^2 E(x) v`, when available in closed form.
    fn exact_hvp(&self, _x: &[T], _v: &[T]) -> Option<Vec<T>> {
        None
    }

    fn has_exact_hvp(&self) -> bool {
        false
    }

    /// Upper bound on `||L||_2`.
    fn linear_norm_bound(&self) -> Option<T> {
        None
    }

    fn symmetry(&self) -> Symmetry {
        Symmetry::None
    }

    /// Weight `w` in the force norm `w ||F||_2` used by stopping tests.
    /// Discretized fields use `sqrt(h)`, giving the grid `L^2` norm.
    fn norm_weight(&self) -> T {
        T::one()
    }
}

/// `||F||` as measured by `model`'s stopping tests.
pub fn weighted_norm<T: Scalar>(model: &dyn EnergyModel<T>, f: &[T]) -> T {
    model.norm_weight() * norm(f)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCounter {
    /// Full force evaluations `F = L x + N(x)`.
    pub n_force: u64,
    /// Applications of `L`, including those inside force evaluations.
    pub n_linear: u64,
    /// Evaluations of `N`, including those inside force evaluations.
    pub n_nonlinear: u64,
    /// Closed-form Hessian-vector products.
    pub n_exact_hvp: u64,
}

/// How products `J(x) v` are formed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HvpMode<T> {
    /// Central difference of forces with the given dimer length.
    Dimer(T),
    Exact,
}

/// Per-run evaluation context: a borrowed model plus query counters.
pub struct Evaluator<'m, T: Scalar> {
    model: &'m dyn EnergyModel<T>,
    counter: QueryCounter,
    scratch: Vec<T>,
}

impl<'m, T: Scalar> Evaluator<'m, T> {
    pub fn new(model: &'m dyn EnergyModel<T>) -> Self {
        Self {
            model,
            counter: QueryCounter::default(),
            scratch: vec![T::zero(); model.dim()],
        }
    }

    pub fn model(&self) -> &'m dyn EnergyModel<T> {
        self.model
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn counter(&self) -> QueryCounter {
        self.counter
    }

    pub fn energy(&self, x: &[T]) -> Result<Option<T>> {
        check_dim(self.dim(), x.len())?;
        Ok(self.model.energy(x))
    }

    pub fn force_into(&mut self, x: &[T], out: &mut [T]) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), out.len())?;
        self.model.apply_linear(x, out);
        self.model.apply_nonlinear(x, &mut self.scratch);
        for (o, &s) in out.iter_mut().zip(&self.scratch) {
            *o = *o + s;
        }
        self.counter.n_force += 1;
        self.counter.n_linear += 1;
        self.counter.n_nonlinear += 1;
        Ok(())
    }

    pub fn force(&mut self, x: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.dim()];
        self.force_into(x, &mut out)?;
        Ok(out)
    }

    /// Force at `x` together with its nonlinear part, for one query.
    pub fn force_split(&mut self, x: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        check_dim(self.dim(), x.len())?;
        let n = self.dim();
        let mut lin = vec![T::zero(); n];
        let mut nl = vec![T::zero(); n];
        self.model.apply_linear(x, &mut lin);
        self.model.apply_nonlinear(x, &mut nl);
        for (l, &v) in lin.iter_mut().zip(&nl) {
            *l = *l + v;
        }
        self.counter.n_force += 1;
        self.counter.n_linear += 1;
        self.counter.n_nonlinear += 1;
        Ok((lin, nl))
    }

    pub fn linear_into(&mut self, x: &[T], out: &mut [T]) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        self.model.apply_linear(x, out);
        self.counter.n_linear += 1;
        Ok(())
    }

    pub fn nonlinear(&mut self, x: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim(), x.len())?;
        let mut out = vec![T::zero(); self.dim()];
        self.model.apply_nonlinear(x, &mut out);
        self.counter.n_nonlinear += 1;
        Ok(out)
    }

    /// `(F(x + l v) - F(x - l v)) / (2 l)`; two force queries.
    pub fn dimer_hvp(&mut self, x: &[T], v: &[T], l: T) -> Result<Vec<T>> {
        if !(l > T::zero()) || !l.is_finite() {
            return Err(HisdError::InvalidParameter(format!(
                "dimer length must be positive, got {l}"
            )));
        }
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), v.len())?;
        let mut shifted = x.to_vec();
        axpy(l, v, &mut shifted);
        let plus = self.force(&shifted)?;
        shifted.copy_from_slice(x);
        axpy(-l, v, &mut shifted);
        let mut out = self.force(&shifted)?;
        let inv = T::one() / (l + l);
        for (o, &p) in out.iter_mut().zip(&plus) {
            *o = (p - *o) * inv;
        }
        Ok(out)
    }

    /// `J(x) v` with the requested product rule.
    ///
    /// Dimer products are taken along the unit direction `v / ||v||` and
    /// rescaled, so the displacement is always the dimer length and the
    /// map is positively homogeneous in `v`.
    pub fn hvp(&mut self, x: &[T], v: &[T], mode: HvpMode<T>) -> Result<Vec<T>> {
        match mode {
            HvpMode::Exact => {
                check_dim(self.dim(), x.len())?;
                check_dim(self.dim(), v.len())?;
                let out = self.model.exact_hvp(x, v).ok_or_else(|| {
                    HisdError::InvalidParameter(format!(
                        "model `{}` has no exact Hessian-vector product",
                        self.model.name()
                    ))
                })?;
                self.counter.n_exact_hvp += 1;
                Ok(out)
            }
            HvpMode::Dimer(l) => {
                let nv = norm(v);
                if nv == T::zero() {
                    check_dim(self.dim(), v.len())?;
                    return Ok(vec![T::zero(); self.dim()]);
                }
                let mut unit = v.to_vec();
                scale(T::one() / nv, &mut unit);
                let mut out = self.dimer_hvp(x, &unit, l)?;
                scale(nv, &mut out);
                Ok(out)
            }
        }
    }
}

/// `v -> J(x) v` as a linear operator bound to an evaluator.
pub struct JacobianOperator<'a, 'm, T: Scalar> {
    pub eval: &'a mut Evaluator<'m, T>,
    pub x: &'a [T],
    pub mode: HvpMode<T>,
}

impl<T: Scalar> LinearOperator<T> for JacobianOperator<'_, '_, T> {
    fn dim(&self) -> usize {
        self.x.len()
    }

    fn apply(&mut self, v: &[T], y: &mut [T]) {
        match self.eval.hvp(self.x, v, self.mode) {
            Ok(r) => y.copy_from_slice(&r),
            Err(_) => y.iter_mut().for_each(|e| *e = T::nan()),
        }
    }

    fn query_cost(&self) -> usize {
        match self.mode {
            HvpMode::Dimer(_) => 2,
            HvpMode::Exact => 0,
        }
    }
}

/// Hessian `grad^2 E = -J` as an operator, for eigen-analysis.
pub struct HessianOperator<'a, 'm, T: Scalar>(pub JacobianOperator<'a, 'm, T>);

impl<T: Scalar> LinearOperator<T> for HessianOperator<'_, '_, T> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&mut self, v: &[T], y: &mut [T]) {
        self.0.apply(v, y);
        for e in y.iter_mut() {
            *e = -*e;
        }
    }

    fn query_cost(&self) -> usize {
        self.0.query_cost()
    }
}

/// Central finite-difference gradient of the energy, negated: an
/// independent estimate of `F(x)`.
pub fn finite_difference_force<T: Scalar>(
    model: &dyn EnergyModel<T>,
    x: &[T],
    h: T,
) -> Option<Vec<T>> {
    let mut xp = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let ep = model.energy(&xp)?;
        xp[i] = orig - h;
        let em = model.energy(&xp)?;
        xp[i] = orig;
        out.push(-(ep - em) / (h + h));
    }
    Some(out)
}

/// Relative error `||F(x) - F_fd(x)|| / max(||F(x)||, 1)`, or `None` for
/// models without an energy.
pub fn force_consistency_error<T: Scalar>(model: &dyn EnergyModel<T>, x: &[T], h: T) -> Option<T> {
    let fd = finite_difference_force(model, x, h)?;
    let mut f = vec![T::zero(); x.len()];
    let mut nl = vec![T::zero(); x.len()];
    model.apply_linear(x, &mut f);
    model.apply_nonlinear(x, &mut nl);
    axpy(T::one(), &nl, &mut f);
    let diff = crate::linalg::vector::distance(&f, &fd);
    Some(diff / norm(&f).max(T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Quadratic;

    #[test]
    fn dimer_on_quadratic_is_exact_for_any_length() {
        let model = Quadratic::<f64>::new(vec![vec![3.0, 1.0], vec![1.0, 2.0]]);
        let mut ev = Evaluator::new(&model);
        let x = [0.3, -1.2];
        let v = [0.25, 0.5];
        for l in [1e-3, 0.1, 7.0] {
            let jv = ev.dimer_hvp(&x, &v, l).unwrap();
            assert!((jv[0] + 1.25).abs() < 1e-12);
            assert!((jv[1] + 1.25).abs() < 1e-12);
        }
        assert_eq!(ev.counter().n_force, 6);
    }

    #[test]
    fn dimer_of_zero_direction_is_zero() {
        let model = crate::problems::Eckhardt;
        let mut ev = Evaluator::new(&model);
        let jv = ev.dimer_hvp(&[-3.0, 2.0], &[0.0, 0.0], 1e-3).unwrap();
        assert_eq!(jv, vec![0.0, 0.0]);
    }

    #[test]
    fn non_positive_dimer_length_is_rejected() {
        let model = crate::problems::Eckhardt;
        let mut ev = Evaluator::new(&model);
        for l in [0.0, -1e-3] {
            assert!(matches!(
                ev.dimer_hvp(&[0.0, 0.0], &[1.0, 0.0], l),
                Err(HisdError::InvalidParameter(_))
            ));
        }
        assert_eq!(ev.counter().n_force, 0);
    }

    #[test]
    fn force_dimension_mismatch() {
        let model = crate::problems::Eckhardt;
        let mut ev = Evaluator::new(&model);
        assert!(matches!(
            ev.force(&[1.0, 2.0, 3.0]),
            Err(HisdError::DimensionMismatch {
                expected: 2,
                found: 3
            })
        ));
    }

    #[test]
    fn counters_track_each_query_kind() {
        let model = crate::problems::Stingray;
        let mut ev = Evaluator::new(&model);
        ev.force(&[0.0, 1.0]).unwrap();
        ev.nonlinear(&[0.0, 1.0]).unwrap();
        let mut out = [0.0; 2];
        ev.linear_into(&[0.0, 1.0], &mut out).unwrap();
        ev.hvp(&[0.0, 1.0], &[3.0, 4.0], HvpMode::Dimer(1e-4))
            .unwrap();
        ev.hvp(&[0.0, 1.0], &[3.0, 4.0], HvpMode::Exact).unwrap();
        let c = ev.counter();
        assert_eq!(c.n_force, 3);
        assert_eq!(c.n_linear, 4);
        assert_eq!(c.n_nonlinear, 4);
        assert_eq!(c.n_exact_hvp, 1);
    }

    #[test]
    fn exact_mode_without_oracle_errors() {
        let model = crate::problems::AllenCahn::<f64>::new(0.01, 4).unwrap();
        struct NoOracle<'a>(&'a crate::problems::AllenCahn<f64>);
        impl EnergyModel<f64> for NoOracle<'_> {
            fn name(&self) -> &str {
                "no-oracle"
            }
            fn dim(&self) -> usize {
                self.0.dim()
            }
            fn apply_linear(&self, x: &[f64], out: &mut [f64]) {
                self.0.apply_linear(x, out)
            }
            fn apply_nonlinear(&self, x: &[f64], out: &mut [f64]) {
                self.0.apply_nonlinear(x, out)
            }
        }
        let wrapped = NoOracle(&model);
        let mut ev = Evaluator::new(&wrapped);
        let x = vec![0.0; 16];
        assert!(ev.hvp(&x, &x, HvpMode::Exact).is_err());
    }
}
