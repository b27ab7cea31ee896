//! Benchmark drivers behind the command line: convergence tables, maximal
//! step sizes, pathway comparison and landscape work counters.
//!
//! Drivers work in `f64` and return plain data; CSV writers format every
//! scalar with 17 significant digits so repeated runs are byte-identical.

mod bench;
mod converge;
mod maxstep;
mod paths;

pub use bench::{
    allen_cahn_landscape, landscape_bench, landscape_seeds, BenchRow, BenchTable, LandscapeSetup,
};
pub use converge::{
    convergence_table, fixed_horizon, ConvergenceOptions, ConvergenceRow, ConvergenceTable,
};
pub use maxstep::{max_step, MaxStepResult, Probe};
pub use paths::{compare_paths, PathComparison, PathPoint};

fn cell(v: f64) -> String {
    crate::io::format_f64(v)
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(cell).unwrap_or_default()
}
