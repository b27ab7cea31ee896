use serde::Serialize;

use super::cell;
use super::converge::fixed_horizon;
use crate::dynamics::{SaddleState, Scheme, SchemeConfig};
use crate::error::{HisdError, Result};
use crate::io::csv_string;
use crate::linalg::vector::distance;
use crate::problems::{benchmark_initial_data, ProblemName, Rosenbrock};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathPoint {
    pub t: f64,
    pub x: [f64; 2],
    /// `|x - (1, 1)|`.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathComparison {
    pub a: f64,
    pub b: f64,
    pub tau_si: f64,
    pub tau_ex: f64,
    pub horizon: f64,
    pub si: Vec<PathPoint>,
    pub ex: Vec<PathPoint>,
    /// `max |x_si(t) - x_ex(t)|` over the times both runs visit.
    pub sup_distance: f64,
    /// First time each run enters the ball of radius `hit_radius` about `(1, 1)`.
    pub first_hit_si: Option<f64>,
    pub first_hit_ex: Option<f64>,
    pub hit_radius: f64,
    pub max_orthonormality_defect: f64,
}

fn path(
    model: &Rosenbrock<f64>,
    initial: &SaddleState<f64>,
    scheme: Scheme,
    tau: f64,
    horizon: f64,
) -> Result<(Vec<PathPoint>, f64)> {
    let steps = (horizon / tau).round() as usize;
    let cfg = SchemeConfig::new(scheme, tau, 1);
    let states = fixed_horizon(model, initial, &cfg, steps, 1)?;
    let defect = states
        .iter()
        .map(|s| s.orthonormality_defect())
        .fold(0.0, f64::max);
    let points = states
        .iter()
        .enumerate()
        .map(|(n, s)| PathPoint {
            t: n as f64 * tau,
            x: [s.x[0], s.x[1]],
            distance: distance(&s.x, &[1.0, 1.0]),
        })
        .collect();
    Ok((points, defect))
}

/// SI and EX index-1 trajectories of the Rosenbrock-type function from
/// `x0 = (0.5, 0.5)`, `v1 = (1, 1)/sqrt 2`.
pub fn compare_paths(
    a: f64,
    b: f64,
    tau_si: f64,
    tau_ex: f64,
    horizon: f64,
    hit_radius: f64,
) -> Result<PathComparison> {
    let (x0, frame) =
        benchmark_initial_data::<f64>(ProblemName::Rosenbrock, 1).expect("rosenbrock data");
    compare_paths_from(
        a,
        b,
        &SaddleState::new(x0, frame)?,
        tau_si,
        tau_ex,
        horizon,
        hit_radius,
    )
}

pub(crate) fn compare_paths_from(
    a: f64,
    b: f64,
    initial: &SaddleState<f64>,
    tau_si: f64,
    tau_ex: f64,
    horizon: f64,
    hit_radius: f64,
) -> Result<PathComparison> {
    let model = Rosenbrock::new(a, b)?;
    let (fine, coarse) = (tau_si.min(tau_ex), tau_si.max(tau_ex));
    let ratio = (coarse / fine).round();
    if ((ratio * fine - coarse) / coarse).abs() > 1e-9 {
        return Err(HisdError::InvalidParameter(format!(
            "steps {tau_si} and {tau_ex} do not share a time grid"
        )));
    }
    let (si, defect_si) = path(&model, initial, Scheme::SemiImplicit, tau_si, horizon)?;
    let (ex, defect_ex) = path(&model, initial, Scheme::Explicit, tau_ex, horizon)?;
    let (c, f) = if tau_si >= tau_ex {
        (&si, &ex)
    } else {
        (&ex, &si)
    };
    let ratio = ratio as usize;
    let sup_distance = c
        .iter()
        .enumerate()
        .filter_map(|(n, p)| f.get(n * ratio).map(|q| distance(&p.x, &q.x)))
        .fold(0.0, f64::max);
    let max_orthonormality_defect = defect_si.max(defect_ex);
    let first_hit = |p: &[PathPoint]| p.iter().find(|q| q.distance <= hit_radius).map(|q| q.t);
    Ok(PathComparison {
        a,
        b,
        tau_si,
        tau_ex,
        horizon,
        first_hit_si: first_hit(&si),
        first_hit_ex: first_hit(&ex),
        si,
        ex,
        sup_distance,
        hit_radius,
        max_orthonormality_defect,
    })
}

impl PathComparison {
    /// Long format: `scheme,t,x_0,x_1,distance`.
    pub fn to_csv(&self) -> Result<String> {
        let header = ["scheme", "t", "x_0", "x_1", "distance"].map(String::from);
        let rows: Vec<Vec<String>> = [("si", &self.si), ("ex", &self.ex)]
            .iter()
            .flat_map(|(name, pts)| {
                pts.iter().map(move |p| {
                    vec![
                        name.to_string(),
                        cell(p.t),
                        cell(p.x[0]),
                        cell(p.x[1]),
                        cell(p.distance),
                    ]
                })
            })
            .collect();
        csv_string(&header, &rows)
    }
}
