use serde::Serialize;

use super::{cell, opt_cell};
use crate::dynamics::{SaddleState, Scheme, SchemeConfig, Stepper};
use crate::error::{HisdError, Result};
use crate::io::csv_string;
use crate::linalg::vector::distance;
use crate::model::EnergyModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceOptions {
    pub scheme: Scheme,
    pub horizon: f64,
    pub reference_tau: f64,
    pub reference_scheme: Scheme,
    pub exact_hvp: bool,
    /// `None` uses each run's time step.
    pub dimer_length: Option<f64>,
    pub gmres_tol: f64,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::SemiImplicit,
            horizon: 1.0,
            reference_tau: 1.0 / 8192.0,
            reference_scheme: Scheme::SemiImplicit,
            exact_hvp: false,
            dimer_length: None,
            gmres_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub tau: f64,
    /// `max_n |x_n - x_ref(t_n)|`.
    pub err_x: f64,
    pub cr_x: Option<f64>,
    /// `max_n |v_{i,n} - v_{i,ref}(t_n)|` per direction.
    pub err_v: Vec<f64>,
    pub cr_v: Vec<Option<f64>>,
    pub flagged: bool,
    pub note: Option<String>,
    pub max_orthonormality_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub problem: String,
    pub index_k: usize,
    pub options: ConvergenceOptions,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log err_x` against `log tau` over unflagged rows.
    pub order_x: Option<f64>,
    pub order_v: Vec<Option<f64>>,
}

/// Steps `initial` forward `steps` times with a fixed step, returning every
/// `every`-th state (the first and last always included).
pub fn fixed_horizon(
    model: &dyn EnergyModel<f64>,
    initial: &SaddleState<f64>,
    cfg: &SchemeConfig<f64>,
    steps: usize,
    every: usize,
) -> Result<Vec<SaddleState<f64>>> {
    let mut stepper = Stepper::new(model, *cfg)?;
    let every = every.max(1);
    let mut state = initial.clone();
    let mut out = vec![state.clone()];
    for n in 1..=steps {
        state = stepper.step(&state)?.0;
        if n % every == 0 || n == steps {
            out.push(state.clone());
        }
    }
    Ok(out)
}

fn steps_for(horizon: f64, tau: f64) -> Result<usize> {
    let n = (horizon / tau).round();
    if n < 1.0 || ((n * tau - horizon) / horizon).abs() > 1e-9 {
        return Err(HisdError::InvalidParameter(format!(
            "time step {tau} does not divide the horizon {horizon}"
        )));
    }
    Ok(n as usize)
}

fn rate(prev: f64, cur: f64, tau_prev: f64, tau_cur: f64) -> Option<f64> {
    (prev > 0.0 && cur > 0.0 && prev.is_finite() && cur.is_finite())
        .then(|| (prev / cur).ln() / (tau_prev / tau_cur).ln())
}

fn fit_order(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, e)| *t > 0.0 && *e > 0.0 && e.is_finite())
        .map(|(t, e)| (t.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Errors of fixed-step runs against a fine reference at the coarse times.
pub fn convergence_table(
    model: &dyn EnergyModel<f64>,
    initial: &SaddleState<f64>,
    taus: &[f64],
    opts: &ConvergenceOptions,
) -> Result<ConvergenceTable> {
    let k = initial.index();
    let make_cfg = |scheme: Scheme, tau: f64| {
        let mut cfg = SchemeConfig::new(scheme, tau, k);
        cfg.exact_hvp = opts.exact_hvp;
        cfg.dimer_length = opts.dimer_length;
        cfg.gmres.rel_tol = opts.gmres_tol;
        cfg
    };
    let ref_steps = steps_for(opts.horizon, opts.reference_tau)?;
    let mut ratios = Vec::with_capacity(taus.len());
    for &tau in taus {
        steps_for(opts.horizon, tau)?;
        let r = (tau / opts.reference_tau).round();
        if r < 1.0 || ((r * opts.reference_tau - tau) / tau).abs() > 1e-9 {
            return Err(HisdError::InvalidParameter(format!(
                "time step {tau} is not a multiple of the reference step {}",
                opts.reference_tau
            )));
        }
        ratios.push(r as usize);
    }
    let reference = fixed_horizon(
        model,
        initial,
        &make_cfg(opts.reference_scheme, opts.reference_tau),
        ref_steps,
        1,
    )?;

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(taus.len());
    for (&tau, &ratio) in taus.iter().zip(&ratios) {
        let steps = steps_for(opts.horizon, tau)?;
        let mut row = ConvergenceRow {
            tau,
            err_x: f64::NAN,
            cr_x: None,
            err_v: vec![f64::NAN; k],
            cr_v: vec![None; k],
            flagged: false,
            note: None,
            max_orthonormality_defect: 0.0,
        };
        match fixed_horizon(model, initial, &make_cfg(opts.scheme, tau), steps, 1) {
            Ok(states) => {
                row.err_x = 0.0;
                row.err_v = vec![0.0; k];
                for (n, s) in states.iter().enumerate() {
                    row.max_orthonormality_defect =
                        row.max_orthonormality_defect.max(s.orthonormality_defect());
                    let r = &reference[n * ratio];
                    row.err_x = row.err_x.max(distance(&s.x, &r.x));
                    for i in 0..k {
                        row.err_v[i] = row.err_v[i].max(distance(&s.frame[i], &r.frame[i]));
                    }
                }
                if !row.err_x.is_finite() {
                    row.flagged = true;
                    row.note = Some("non-finite error".into());
                }
            }
            Err(e) => {
                row.flagged = true;
                row.note = Some(e.to_string());
            }
        }
        if let Some(prev) = rows.last() {
            if !prev.flagged && !row.flagged {
                row.cr_x = rate(prev.err_x, row.err_x, prev.tau, tau);
                for i in 0..k {
                    row.cr_v[i] = rate(prev.err_v[i], row.err_v[i], prev.tau, tau);
                }
            }
        }
        rows.push(row);
    }

    let ok: Vec<&ConvergenceRow> = rows.iter().filter(|r| !r.flagged).collect();
    let order_x = fit_order(&ok.iter().map(|r| (r.tau, r.err_x)).collect::<Vec<_>>());
    let order_v = (0..k)
        .map(|i| fit_order(&ok.iter().map(|r| (r.tau, r.err_v[i])).collect::<Vec<_>>()))
        .collect();
    Ok(ConvergenceTable {
        problem: model.name().to_string(),
        index_k: k,
        options: *opts,
        rows,
        order_x,
        order_v,
    })
}

impl ConvergenceTable {
    pub fn any_flagged(&self) -> bool {
        self.rows.iter().any(|r| r.flagged)
    }

    /// Header `tau,err_x,cr_x,err_v1,cr_v1,..,flagged`.
    pub fn to_csv(&self) -> Result<String> {
        let mut header = vec!["tau".to_string(), "err_x".into(), "cr_x".into()];
        for i in 1..=self.index_k {
            header.push(format!("err_v{i}"));
            header.push(format!("cr_v{i}"));
        }
        header.push("flagged".into());
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut c = vec![cell(r.tau), cell(r.err_x), opt_cell(r.cr_x)];
                for i in 0..self.index_k {
                    c.push(cell(r.err_v[i]));
                    c.push(opt_cell(r.cr_v[i]));
                }
                c.push(r.flagged.to_string());
                c
            })
            .collect();
        csv_string(&header, &rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_matches_log2_for_halving() {
        let r = rate(4.0, 2.0, 0.5, 0.25).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
        assert!(rate(0.0, 1.0, 0.5, 0.25).is_none());
    }

    #[test]
    fn order_fit_recovers_power_law() {
        let pts: Vec<(f64, f64)> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&t| (t, 3.0 * t * t))
            .collect();
        assert!((fit_order(&pts).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn horizon_must_be_divisible() {
        assert!(steps_for(1.0, 0.3).is_err());
        assert_eq!(steps_for(1.0, 1.0 / 32.0).unwrap(), 32);
    }
}
