use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::state::{SaddleState, Scheme, SchemeConfig, StepDiagnostics};
use super::stepper::Stepper;
use crate::error::{HisdError, Result};
use crate::io::{format_f64, write_csv_rows};
use crate::linalg::gram_schmidt::orthonormalize;
use crate::linalg::vector::{all_finite, norm};
use crate::model::{weighted_norm, EnergyModel, QueryCounter};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "reason")]
pub enum Termination {
    Converged,
    StepLimit,
    Diverged,
    /// A step raised a numerical error (GMRES failure, lost direction).
    StepFailed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint<T> {
    pub step: usize,
    pub time: T,
    pub x: Vec<T>,
    pub force_norm: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary<T> {
    pub step: usize,
    /// `||F(x)||` before the step.
    pub force_norm: T,
    pub gmres_iterations: usize,
    pub max_tilde_gap: T,
    pub orthonormality_defect: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord<T> {
    pub problem: String,
    pub scheme: Scheme,
    pub tau: T,
    pub index_k: usize,
    pub termination: Termination,
    /// Completed time steps.
    pub n_iter: usize,
    pub counters: QueryCounter,
    pub final_state: SaddleState<T>,
    pub final_force_norm: T,
    pub trajectory: Vec<TrajectoryPoint<T>>,
    pub steps: Vec<StepSummary<T>>,
    pub max_orthonormality_defect: T,
    pub wall_seconds: f64,
}

impl<T: Scalar> RunRecord<T> {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    /// Force queries `N_F`.
    pub fn n_force(&self) -> u64 {
        self.counters.n_force
    }

    /// Trajectory as CSV with header `step,t,x_0,..,x_{N-1},force_norm`.
    pub fn trajectory_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let n = self.final_state.dim();
        let mut header = vec!["step".to_string(), "t".to_string()];
        header.extend((0..n).map(|i| format!("x_{i}")));
        header.push("force_norm".to_string());
        let rows: Vec<Vec<String>> = self
            .trajectory
            .iter()
            .map(|p| {
                let mut r = vec![p.step.to_string(), format_f64(p.time.to_f64_lossy())];
                r.extend(p.x.iter().map(|v| format_f64(v.to_f64_lossy())));
                r.push(format_f64(p.force_norm.to_f64_lossy()));
                r
            })
            .collect();
        write_csv_rows(out, &header, &rows)
    }

    pub fn write_trajectory_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.trajectory_csv(std::io::BufWriter::new(f))
    }
}

/// Runs the configured scheme until `||F|| <= stop_force_norm`, the step
/// limit, divergence or a failed step.
pub fn run<T: Scalar>(
    model: &dyn EnergyModel<T>,
    initial: &SaddleState<T>,
    cfg: &SchemeConfig<T>,
) -> Result<RunRecord<T>> {
    run_with_observer(model, initial, cfg, |_, _| {})
}

/// As [`run`], calling `observer` with every accepted state and its step
/// diagnostics.
pub fn run_with_observer<T: Scalar, O>(
    model: &dyn EnergyModel<T>,
    initial: &SaddleState<T>,
    cfg: &SchemeConfig<T>,
    mut observer: O,
) -> Result<RunRecord<T>>
where
    O: FnMut(&SaddleState<T>, &StepDiagnostics<T>),
{
    let started = Instant::now();
    let mut stepper = Stepper::new(model, *cfg)?;
    let stride = cfg.stride_for(model.dim());

    let mut state = initial.clone();
    if state.orthonormality_defect() > T::lit(1e-10) {
        state.frame = orthonormalize(&state.frame)?;
    }
    let mut max_defect = state.orthonormality_defect();
    let mut trajectory = Vec::new();
    let mut steps = Vec::new();

    let (termination, final_force) = loop {
        let force_norm = weighted_norm(model, stepper.force_at(&state.x)?);
        let on_stride = state.step.is_multiple_of(stride);
        if on_stride {
            trajectory.push(TrajectoryPoint {
                step: state.step,
                time: state.time,
                x: state.x.clone(),
                force_norm,
            });
        }
        if !all_finite(&state.x)
            || !force_norm.is_finite()
            || norm(&state.x) > cfg.divergence_threshold
        {
            break (Termination::Diverged, force_norm);
        }
        if force_norm <= cfg.stop_force_norm {
            break (Termination::Converged, force_norm);
        }
        if state.step >= cfg.max_steps {
            break (Termination::StepLimit, force_norm);
        }
        match stepper.step(&state) {
            Ok((next, diag)) => {
                let defect = next.orthonormality_defect();
                max_defect = max_defect.max(defect);
                steps.push(StepSummary {
                    step: state.step,
                    force_norm: diag.force_norm,
                    gmres_iterations: diag.gmres_iters.iter().sum(),
                    max_tilde_gap: diag.tilde_gap.iter().fold(T::zero(), |m, &g| m.max(g)),
                    orthonormality_defect: defect,
                });
                observer(&next, &diag);
                state = next;
            }
            Err(e @ (HisdError::DimensionMismatch { .. } | HisdError::InvalidParameter(_))) => {
                return Err(e)
            }
            Err(e) => break (Termination::StepFailed(e.to_string()), force_norm),
        }
    };

    if trajectory.last().map(|p| p.step) != Some(state.step) {
        trajectory.push(TrajectoryPoint {
            step: state.step,
            time: state.time,
            x: state.x.clone(),
            force_norm: final_force,
        });
    }

    Ok(RunRecord {
        problem: model.name().to_string(),
        scheme: cfg.scheme,
        tau: cfg.tau,
        index_k: cfg.index_k,
        termination,
        n_iter: state.step,
        counters: stepper.counter(),
        final_force_norm: final_force,
        final_state: state,
        trajectory,
        steps,
        max_orthonormality_defect: max_defect,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}
