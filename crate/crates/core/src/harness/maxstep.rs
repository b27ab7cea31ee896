use serde::Serialize;

use super::cell;
use crate::dynamics::{run, SaddleState, Scheme, SchemeConfig, Termination};
use crate::error::{HisdError, Result};
use crate::io::csv_string;
use crate::model::EnergyModel;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probe {
    pub tau: f64,
    pub converged: bool,
    pub n_iter: usize,
    pub termination: Termination,
    pub max_orthonormality_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxStepResult {
    pub problem: String,
    pub index_k: usize,
    pub scheme: Scheme,
    /// Largest probed step that converged.
    pub tau_max: f64,
    /// Smallest probed step that did not converge.
    pub tau_fail: f64,
    /// Probes in evaluation order.
    pub probes: Vec<Probe>,
}

/// Geometric bisection of `[lo, hi]` for the largest step whose run from
/// `initial` converges, to relative width `rel_width`.
///
/// `lo` must converge and `hi` must not; otherwise the result is
/// [`HisdError::NoSignChange`].
pub fn max_step(
    model: &dyn EnergyModel<f64>,
    initial: &SaddleState<f64>,
    base: &SchemeConfig<f64>,
    lo: f64,
    hi: f64,
    rel_width: f64,
) -> Result<MaxStepResult> {
    if !(lo > 0.0 && hi > lo && rel_width > 0.0) {
        return Err(HisdError::InvalidParameter(format!(
            "bracket [{lo}, {hi}] with width {rel_width} is not valid"
        )));
    }
    let mut probes = Vec::new();
    let mut probe = |tau: f64| -> Result<bool> {
        let mut cfg = *base;
        cfg.tau = tau;
        cfg.index_k = initial.index();
        cfg.trajectory_stride = Some(usize::MAX);
        let rec = run(model, initial, &cfg)?;
        let ok = rec.converged();
        probes.push(Probe {
            tau,
            converged: ok,
            n_iter: rec.n_iter,
            termination: rec.termination,
            max_orthonormality_defect: rec.max_orthonormality_defect,
        });
        Ok(ok)
    };
    if !probe(lo)? || probe(hi)? {
        return Err(HisdError::NoSignChange { lo, hi });
    }
    let (mut a, mut b) = (lo, hi);
    while b / a > 1.0 + rel_width {
        let mid = (a * b).sqrt();
        if probe(mid)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(MaxStepResult {
        problem: model.name().to_string(),
        index_k: initial.index(),
        scheme: base.scheme,
        tau_max: a,
        tau_fail: b,
        probes,
    })
}

impl MaxStepResult {
    /// Header `tau,converged,n_iter,termination`.
    pub fn probes_csv(&self) -> Result<String> {
        let header = ["tau", "converged", "n_iter", "termination"].map(String::from);
        let rows: Vec<Vec<String>> = self
            .probes
            .iter()
            .map(|p| {
                vec![
                    cell(p.tau),
                    p.converged.to_string(),
                    p.n_iter.to_string(),
                    match &p.termination {
                        Termination::Converged => "converged".into(),
                        Termination::StepLimit => "step-limit".into(),
                        Termination::Diverged => "diverged".into(),
                        Termination::StepFailed(m) => format!("step-failed: {m}"),
                    },
                ]
            })
            .collect();
        csv_string(&header, &rows)
    }
}
