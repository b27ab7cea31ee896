//! Benchmark gradient systems.
//!
//! The two-dimensional test surfaces keep their whole force in `N`. Rosenbrock
//! and Allen-Cahn put the exactly-linear part of the force into `L` and the
//! remainder (including constants) into `N`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{HisdError, Result};
use crate::linalg::vector::dot;
use crate::model::{EnergyModel, Symmetry};
use crate::Scalar;

/// `E = exp(-x1^2-(x2+1)^2) + exp(-x1^2-(x2-1)^2) + 4 exp(-3(x1^2+x2^2)/2) + x2^2/2`.
///
/// The force is treated as entirely nonlinear (`L = 0`).
#[derive(Debug, Clone, Copy, Default)]
pub struct Eckhardt;

impl Eckhardt {
    fn terms<T: Scalar>(x: &[T]) -> (T, T, T) {
        let (a, b) = (x[0], x[1]);
        let e1 = (-a * a - (b + T::one()) * (b + T::one())).exp();
        let e2 = (-a * a - (b - T::one()) * (b - T::one())).exp();
        let e3 = (T::lit(-1.5) * (a * a + b * b)).exp();
        (e1, e2, e3)
    }

    /// Hessian of `E` (not of `-E`).
    pub fn hessian<T: Scalar>(x: &[T]) -> [[T; 2]; 2] {
        let (a, b) = (x[0], x[1]);
        let (e1, e2, e3) = Self::terms(x);
        let two = T::lit(2.0);
        let four = T::lit(4.0);
        // d^2 exp(q) = exp(q) (grad q grad q^T + hess q)
        let gauss = |e: T, c: T| {
            let g0 = -two * a;
            let g1 = -two * (b + c);
            [
                [e * (g0 * g0 - two), e * g0 * g1],
                [e * g0 * g1, e * (g1 * g1 - two)],
            ]
        };
        let h1 = gauss(e1, T::one());
        let h2 = gauss(e2, -T::one());
        let g0 = T::lit(-3.0) * a;
        let g1 = T::lit(-3.0) * b;
        let h3 = [
            [four * e3 * (g0 * g0 - T::lit(3.0)), four * e3 * g0 * g1],
            [four * e3 * g0 * g1, four * e3 * (g1 * g1 - T::lit(3.0))],
        ];
        let mut h = [[T::zero(); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                h[i][j] = h1[i][j] + h2[i][j] + h3[i][j];
            }
        }
        h[1][1] = h[1][1] + T::one();
        h
    }
}

impl<T: Scalar> EnergyModel<T> for Eckhardt {
    fn name(&self) -> &str {
        "eckhardt"
    }

    fn dim(&self) -> usize {
        2
    }

    fn energy(&self, x: &[T]) -> Option<T> {
        let (e1, e2, e3) = Self::terms(x);
        Some(e1 + e2 + T::lit(4.0) * e3 + x[1] * x[1] * T::lit(0.5))
    }

    fn apply_linear(&self, _x: &[T], out: &mut [T]) {
        out.fill(T::zero());
    }

    fn apply_nonlinear(&self, x: &[T], out: &mut [T]) {
        let (a, b) = (x[0], x[1]);
        let (e1, e2, e3) = Self::terms(x);
        let two = T::lit(2.0);
        let twelve = T::lit(12.0);
        out[0] = two * a * e1 + two * a * e2 + twelve * a * e3;
        out[1] = two * (b + T::one()) * e1 + two * (b - T::one()) * e2 + twelve * b * e3 - b;
    }

    fn exact_hvp(&self, x: &[T], v: &[T]) -> Option<Vec<T>> {
        let h = Self::hessian(x);
        Some(vec![
            -(h[0][0] * v[0] + h[0][1] * v[1]),
            -(h[1][0] * v[0] + h[1][1] * v[1]),
        ])
    }

    fn has_exact_hvp(&self) -> bool {
        true
    }

    fn linear_norm_bound(&self) -> Option<T> {
        Some(T::zero())
    }
}

/// `E = x1^2 + (x1 - 1) x2^2`, with `L = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Stingray;

impl<T: Scalar> EnergyModel<T> for Stingray {
    fn name(&self) -> &str {
        "stingray"
    }

    fn dim(&self) -> usize {
        2
    }

    fn energy(&self, x: &[T]) -> Option<T> {
        Some(x[0] * x[0] + (x[0] - T::one()) * x[1] * x[1])
    }

    fn apply_linear(&self, _x: &[T], out: &mut [T]) {
        out.fill(T::zero());
    }

    fn apply_nonlinear(&self, x: &[T], out: &mut [T]) {
        let two = T::lit(2.0);
        out[0] = -two * x[0] - x[1] * x[1];
        out[1] = two * x[1] - two * x[0] * x[1];
    }

    fn exact_hvp(&self, x: &[T], v: &[T]) -> Option<Vec<T>> {
        let two = T::lit(2.0);
        let h01 = two * x[1];
        let h11 = two * (x[0] - T::one());
        Some(vec![-(two * v[0] + h01 * v[1]), -(h01 * v[0] + h11 * v[1])])
    }

    fn has_exact_hvp(&self) -> bool {
        true
    }

    fn linear_norm_bound(&self) -> Option<T> {
        Some(T::zero())
    }
}

/// `E = a (x2 - x1^2)^2 + b (1 - x1)^2`, with `L x = (-2 b x1, -2 a x2)`.
#[derive(Debug, Clone, Copy)]
pub struct Rosenbrock<T> {
    pub a: T,
    pub b: T,
}

impl<T: Scalar> Rosenbrock<T> {
    pub fn new(a: T, b: T) -> Result<Self> {
        if a == T::zero() && b == T::zero() {
            return Err(HisdError::InvalidParameter(
                "rosenbrock needs (a, b) != (0, 0)".into(),
            ));
        }
        Ok(Self { a, b })
    }

    /// Hessian of `E`.
    pub fn hessian(&self, x: &[T]) -> [[T; 2]; 2] {
        let (a, b) = (self.a, self.b);
        let h00 = T::lit(12.0) * a * x[0] * x[0] - T::lit(4.0) * a * x[1] + T::lit(2.0) * b;
        let h01 = T::lit(-4.0) * a * x[0];
        [[h00, h01], [h01, T::lit(2.0) * a]]
    }
}

impl<T: Scalar> EnergyModel<T> for Rosenbrock<T> {
    fn name(&self) -> &str {
        "rosenbrock"
    }

    fn dim(&self) -> usize {
        2
    }

    fn energy(&self, x: &[T]) -> Option<T> {
        let d = x[1] - x[0] * x[0];
        let e = T::one() - x[0];
        Some(self.a * d * d + self.b * e * e)
    }

    fn apply_linear(&self, x: &[T], out: &mut [T]) {
        out[0] = T::lit(-2.0) * self.b * x[0];
        out[1] = T::lit(-2.0) * self.a * x[1];
    }

    fn apply_nonlinear(&self, x: &[T], out: &mut [T]) {
        let (a, b) = (self.a, self.b);
        let four = T::lit(4.0);
        let two = T::lit(2.0);
        out[0] = -four * a * x[0] * x[0] * x[0] + four * a * x[0] * x[1] + two * b;
        out[1] = two * a * x[0] * x[0];
    }

    fn exact_hvp(&self, x: &[T], v: &[T]) -> Option<Vec<T>> {
        let h = self.hessian(x);
        Some(vec![
            -(h[0][0] * v[0] + h[0][1] * v[1]),
            -(h[1][0] * v[0] + h[1][1] * v[1]),
        ])
    }

    fn has_exact_hvp(&self) -> bool {
        true
    }

    fn linear_norm_bound(&self) -> Option<T> {
        Some(
            (T::lit(2.0) * self.a)
                .abs()
                .max((T::lit(2.0) * self.b).abs()),
        )
    }
}

/// Periodic 1-D Allen-Cahn on `[0, 1]` with `N = 2^mesh_exp` cells:
/// `F(u) = kappa D2 u + u - u^3`, where `D2` is the `(1, -2, 1)/h^2` stencil.
///
/// The energy is the un-weighted grid sum
/// `sum_i kappa/(2 h^2) (u_{i+1} - u_i)^2 + (u_i^2 - 1)^2 / 4`,
/// whose gradient is exactly `-F`.
#[derive(Debug, Clone)]
pub struct AllenCahn<T> {
    kappa: T,
    n: usize,
    inv_h2: T,
}

impl<T: Scalar> AllenCahn<T> {
    pub fn new(kappa: T, mesh_exp: u32) -> Result<Self> {
        if !(kappa > T::zero()) {
            return Err(HisdError::InvalidParameter(format!(
                "allen-cahn kappa must be positive, got {kappa}"
            )));
        }
        if !(4..=20).contains(&mesh_exp) {
            return Err(HisdError::InvalidParameter(format!(
                "allen-cahn mesh_exp must lie in 4..=20, got {mesh_exp}"
            )));
        }
        let n = 1usize << mesh_exp;
        let nn = T::from_usize(n).expect("grid size fits");
        Ok(Self {
            kappa,
            n,
            inv_h2: nn * nn,
        })
    }

    pub fn kappa(&self) -> T {
        self.kappa
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn mesh_width(&self) -> T {
        T::one() / T::from_usize(self.n).expect("grid size fits")
    }

    /// Eigenvalues of `L`: `1 - kappa (4/h^2) sin^2(pi m h)`, `m = 0..N`.
    pub fn linear_eigenvalues(&self) -> Vec<T> {
        let h = self.mesh_width();
        let pi = T::lit(std::f64::consts::PI);
        (0..self.n)
            .map(|m| {
                let s = (pi * T::from_usize(m).unwrap() * h).sin();
                T::one() - self.kappa * T::lit(4.0) * self.inv_h2 * s * s
            })
            .collect()
    }

    /// Morse index of `u = 0`: the number of positive eigenvalues of `L`.
    pub fn zero_state_index(&self) -> usize {
        self.linear_eigenvalues()
            .into_iter()
            .filter(|&l| l > T::zero())
            .count()
    }

    fn laplacian(&self, u: &[T], out: &mut [T]) {
        let n = self.n;
        let two = T::lit(2.0);
        for i in 0..n {
            let l = u[(i + n - 1) % n];
            let r = u[(i + 1) % n];
            out[i] = (l - two * u[i] + r) * self.inv_h2;
        }
    }
}

impl<T: Scalar> EnergyModel<T> for AllenCahn<T> {
    fn name(&self) -> &str {
        "allen-cahn"
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn energy(&self, u: &[T]) -> Option<T> {
        let n = self.n;
        let half = T::lit(0.5);
        let quarter = T::lit(0.25);
        let mut e = T::zero();
        for i in 0..n {
            let d = u[(i + 1) % n] - u[i];
            let w = u[i] * u[i] - T::one();
            e = e + half * self.kappa * self.inv_h2 * d * d + quarter * w * w;
        }
        Some(e)
    }

    fn apply_linear(&self, u: &[T], out: &mut [T]) {
        self.laplacian(u, out);
        for (o, &ui) in out.iter_mut().zip(u) {
            *o = self.kappa * *o + ui;
        }
    }

    fn apply_nonlinear(&self, u: &[T], out: &mut [T]) {
        for (o, &ui) in out.iter_mut().zip(u) {
            *o = -ui * ui * ui;
        }
    }

    fn exact_hvp(&self, u: &[T], v: &[T]) -> Option<Vec<T>> {
        let mut out = vec![T::zero(); self.n];
        self.apply_linear(v, &mut out);
        let three = T::lit(3.0);
        for ((o, &ui), &vi) in out.iter_mut().zip(u).zip(v) {
            *o = *o - three * ui * ui * vi;
        }
        Some(out)
    }

    fn has_exact_hvp(&self) -> bool {
        true
    }

    fn linear_norm_bound(&self) -> Option<T> {
        Some(self.kappa * T::lit(4.0) * self.inv_h2 + T::one())
    }

    fn symmetry(&self) -> Symmetry {
        Symmetry::CyclicMirror
    }

    fn norm_weight(&self) -> T {
        self.mesh_width().sqrt()
    }
}

/// `E = x^T A x / 2` for symmetric `A`: `F = -A x`, all linear.
#[derive(Debug, Clone)]
pub struct Quadratic<T> {
    a: Vec<Vec<T>>,
}

impl<T: Scalar> Quadratic<T> {
    pub fn new(a: Vec<Vec<T>>) -> Self {
        let n = a.len();
        assert!(a.iter().all(|r| r.len() == n), "matrix must be square");
        Self { a }
    }
}

impl<T: Scalar> EnergyModel<T> for Quadratic<T> {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.a.len()
    }

    fn energy(&self, x: &[T]) -> Option<T> {
        let ax: Vec<T> = self.a.iter().map(|r| dot(r, x)).collect();
        Some(T::lit(0.5) * dot(x, &ax))
    }

    fn apply_linear(&self, x: &[T], out: &mut [T]) {
        for (o, r) in out.iter_mut().zip(&self.a) {
            *o = -dot(r, x);
        }
    }

    fn apply_nonlinear(&self, _x: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
    }

    fn exact_hvp(&self, _x: &[T], v: &[T]) -> Option<Vec<T>> {
        Some(self.a.iter().map(|r| -dot(r, v)).collect())
    }

    fn has_exact_hvp(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemName {
    Eckhardt,
    Stingray,
    Rosenbrock,
    AllenCahn,
}

impl ProblemName {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemName::Eckhardt => "eckhardt",
            ProblemName::Stingray => "stingray",
            ProblemName::Rosenbrock => "rosenbrock",
            ProblemName::AllenCahn => "allen-cahn",
        }
    }
}

impl fmt::Display for ProblemName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemName {
    type Err = HisdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "eckhardt" => Ok(ProblemName::Eckhardt),
            "stingray" => Ok(ProblemName::Stingray),
            "rosenbrock" => Ok(ProblemName::Rosenbrock),
            "allen-cahn" | "allencahn" => Ok(ProblemName::AllenCahn),
            _ => Err(HisdError::UnknownProblem(s.to_string())),
        }
    }
}

/// Registry entry: a problem name plus named scalar parameters
/// (`a`, `b` for rosenbrock; `kappa`, `mesh_exp` for allen-cahn).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: ProblemName,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ProblemSpec {
    pub fn new(name: ProblemName) -> Self {
        Self {
            name,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }

    fn param_or(&self, key: &str, default: f64) -> f64 {
        self.param(key).unwrap_or(default)
    }

    pub fn kappa(&self) -> f64 {
        self.param_or("kappa", 0.001)
    }

    pub fn build<T: Scalar>(&self) -> Result<Box<dyn EnergyModel<T>>> {
        let allowed: &[&str] = match self.name {
            ProblemName::Eckhardt | ProblemName::Stingray => &[],
            ProblemName::Rosenbrock => &["a", "b"],
            ProblemName::AllenCahn => &["kappa", "mesh_exp"],
        };
        if let Some(k) = self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(HisdError::InvalidParameter(format!(
                "problem `{}` does not take parameter `{k}`",
                self.name
            )));
        }
        Ok(match self.name {
            ProblemName::Eckhardt => Box::new(Eckhardt),
            ProblemName::Stingray => Box::new(Stingray),
            ProblemName::Rosenbrock => Box::new(Rosenbrock::new(
                T::lit(self.param_or("a", -30.0)),
                T::lit(self.param_or("b", 0.5)),
            )?),
            ProblemName::AllenCahn => {
                let exp = self.param_or("mesh_exp", 7.0);
                if exp.fract() != 0.0 || exp < 4.0 {
                    return Err(HisdError::InvalidParameter(format!(
                        "mesh_exp must be an integer >= 4, got {exp}"
                    )));
                }
                Box::new(AllenCahn::new(T::lit(self.kappa()), exp as u32)?)
            }
        })
    }
}

/// Benchmark starting data `(x0, [v_1..v_k])` for the two-dimensional
/// problems: Eckhardt and stingray for `k = 1, 2`, rosenbrock for `k = 1`.
pub fn benchmark_initial_data<T: Scalar>(
    name: ProblemName,
    k: usize,
) -> Option<(Vec<T>, Vec<Vec<T>>)> {
    let s5 = T::lit(5.0f64.sqrt());
    let s2 = T::lit(2.0f64.sqrt());
    let l = T::lit;
    match (name, k) {
        (ProblemName::Eckhardt, 1) => {
            Some((vec![l(-3.0), l(2.0)], vec![vec![l(-1.0) / s5, l(2.0) / s5]]))
        }
        (ProblemName::Eckhardt, 2) => Some((
            vec![l(-3.0), l(2.0)],
            vec![
                vec![l(-1.0) / s5, l(2.0) / s5],
                vec![l(2.0) / s5, l(1.0) / s5],
            ],
        )),
        (ProblemName::Stingray, 1) => {
            Some((vec![l(0.0), l(1.0)], vec![vec![l(1.0) / s5, l(2.0) / s5]]))
        }
        (ProblemName::Stingray, 2) => Some((
            vec![l(0.0), l(1.0)],
            vec![
                vec![l(1.0) / s5, l(2.0) / s5],
                vec![l(-2.0) / s5, l(1.0) / s5],
            ],
        )),
        (ProblemName::Rosenbrock, 1) => {
            Some((vec![l(0.5), l(0.5)], vec![vec![l(1.0) / s2, l(1.0) / s2]]))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::force_consistency_error;

    #[test]
    fn eckhardt_energy_at_origin() {
        let e = EnergyModel::<f64>::energy(&Eckhardt, &[0.0, 0.0]).unwrap();
        assert!((e - (2.0 * (-1.0f64).exp() + 4.0)).abs() < 1e-14);
        assert!((e - 4.7358).abs() < 1e-4);
    }

    #[test]
    fn stingray_force_and_hessian() {
        let mut f = [0.0; 2];
        let mut nl = [0.0; 2];
        EnergyModel::<f64>::apply_linear(&Stingray, &[0.0, 1.0], &mut f);
        EnergyModel::<f64>::apply_nonlinear(&Stingray, &[0.0, 1.0], &mut nl);
        assert_eq!([f[0] + nl[0], f[1] + nl[1]], [-1.0, 2.0]);
        let je1 = Stingray.exact_hvp(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        let je2 = Stingray.exact_hvp(&[1.0, 1.0], &[0.0, 1.0]).unwrap();
        assert_eq!(je1, vec![-2.0, -2.0]);
        assert_eq!(je2, vec![-2.0, 0.0]);
    }

    #[test]
    fn rosenbrock_zero_energy_and_force_at_one_one() {
        for (a, b) in [(-30.0, 0.5), (0.1, -300.0), (2.0, 7.0)] {
            let r = Rosenbrock::new(a, b).unwrap();
            assert_eq!(r.energy(&[1.0, 1.0]).unwrap(), 0.0);
            let mut f = [0.0; 2];
            let mut nl = [0.0; 2];
            r.apply_linear(&[1.0, 1.0], &mut f);
            r.apply_nonlinear(&[1.0, 1.0], &mut nl);
            assert_eq!(f[0] + nl[0], 0.0);
            assert_eq!(f[1] + nl[1], 0.0);
        }
        assert!(Rosenbrock::new(0.0, 0.0).is_err());
    }

    #[test]
    fn allen_cahn_constant_states_are_stationary() {
        let ac = AllenCahn::<f64>::new(0.001, 7).unwrap();
        for c in [0.0, 1.0, -1.0] {
            let u = vec![c; 128];
            let mut f = vec![0.0; 128];
            let mut nl = vec![0.0; 128];
            ac.apply_linear(&u, &mut f);
            ac.apply_nonlinear(&u, &mut nl);
            assert!(f.iter().zip(&nl).all(|(a, b)| a + b == 0.0));
        }
    }

    #[test]
    fn allen_cahn_zero_state_indices() {
        let expect = [
            (0.02, 3),
            (0.005, 5),
            (0.0025, 7),
            (0.00125, 9),
            (0.001, 11),
        ];
        for (kappa, index) in expect {
            assert_eq!(
                AllenCahn::<f64>::new(kappa, 7).unwrap().zero_state_index(),
                index
            );
        }
    }

    #[test]
    fn allen_cahn_linear_part_commutes_with_shift() {
        let ac = AllenCahn::<f64>::new(0.003, 5).unwrap();
        let u: Vec<f64> = (0..32).map(|i| ((i * 7 % 13) as f64 - 6.0) / 6.0).collect();
        let shift = |v: &[f64]| -> Vec<f64> { (0..32).map(|i| v[(i + 31) % 32]).collect() };
        let mut lu = vec![0.0; 32];
        let mut lsu = vec![0.0; 32];
        ac.apply_linear(&u, &mut lu);
        ac.apply_linear(&shift(&u), &mut lsu);
        assert_eq!(lsu, shift(&lu));
    }

    #[test]
    fn allen_cahn_parameter_validation() {
        assert!(AllenCahn::<f64>::new(0.0, 7).is_err());
        assert!(AllenCahn::<f64>::new(0.01, 3).is_err());
    }

    #[test]
    fn registry_builds_models_and_rejects_unknown_keys() {
        let spec = ProblemSpec::new("allen-cahn".parse().unwrap())
            .with("kappa", 0.02)
            .with("mesh_exp", 5.0);
        let m = spec.build::<f64>().unwrap();
        assert_eq!(m.dim(), 32);
        assert_eq!(m.name(), "allen-cahn");
        let bad = ProblemSpec::new(ProblemName::Eckhardt).with("kappa", 1.0);
        assert!(bad.build::<f64>().is_err());
        assert!("double-well".parse::<ProblemName>().is_err());
        let rb = ProblemSpec::new(ProblemName::Rosenbrock)
            .with("a", 0.0)
            .with("b", 0.0);
        assert!(rb.build::<f64>().is_err());
    }

    #[test]
    fn eckhardt_force_matches_finite_differences_in_single_precision() {
        let err = force_consistency_error::<f32>(&Eckhardt, &[-0.4, 0.3], 1e-2).unwrap();
        assert!(err < 1e-2, "{err}");
    }
}
