//! Explicit and semi-implicit time steppers for high-index saddle dynamics.

mod run;
mod state;
mod stepper;

pub use run::{run, run_with_observer, RunRecord, StepSummary, Termination, TrajectoryPoint};
pub use state::{SaddleState, Scheme, SchemeConfig, StepDiagnostics};
pub use stepper::{explicit_step, hisd_rhs, semi_implicit_step, Stepper};
