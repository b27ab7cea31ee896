//! High-index saddle dynamics (HiSD) for gradient systems.
//!
//! The crate provides explicit and semi-implicit time steppers for the
//! index-`k` saddle dynamics, a matrix-free GMRES solver for the implicit
//! systems, dimer Hessian-vector products, and upward/downward search for
//! building solution landscapes. All numerics are generic over [`Scalar`]
//! (`f32` or `f64`); the aliases at the crate root fix `f64`.

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod io;
pub mod landscape;
pub mod linalg;
pub mod model;
pub mod problems;
mod scalar;

pub use dynamics::{
    explicit_step, hisd_rhs, run, run_with_observer, semi_implicit_step, SaddleState, Scheme,
    SchemeConfig, StepDiagnostics, Stepper, Termination,
};
pub use error::{HisdError, LinearSystem, Result};
pub use linalg::{
    gmres_solve, gram_schmidt_append, smallest_eigpairs, GmresConfig, GmresReport, LinearOperator,
};
pub use model::{EnergyModel, Evaluator, HvpMode, QueryCounter, Symmetry};
pub use problems::{
    AllenCahn, Eckhardt, ProblemName, ProblemSpec, Quadratic, Rosenbrock, Stingray,
};
pub use scalar::Scalar;

/// Double-precision aliases.
pub type State = SaddleState<f64>;
pub type Config = SchemeConfig<f64>;
pub type Diagnostics = StepDiagnostics<f64>;
pub type Record = dynamics::RunRecord<f64>;
pub type Model = dyn EnergyModel<f64>;
pub type Gmres = GmresConfig<f64>;
pub type Graph = landscape::LandscapeGraph<f64>;
pub type Point = landscape::StationaryPoint<f64>;
