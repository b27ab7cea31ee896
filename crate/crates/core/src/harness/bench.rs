use rayon::prelude::*;
use serde::Serialize;

use super::cell;
use crate::dynamics::{run, SaddleState, Scheme, SchemeConfig, Termination};
use crate::error::Result;
use crate::io::csv_string;
use crate::landscape::{run_seed, seed_graph, upward_from, LandscapeGraph, SearchConfig};
use crate::model::EnergyModel;
use crate::problems::AllenCahn;

/// Allen-Cahn landscape built upward from `u = 1`.
#[derive(Debug, Clone, Copy)]
pub struct LandscapeSetup {
    pub kappa: f64,
    pub mesh_exp: u32,
    /// `None` climbs to the index of `u = 0`.
    pub target_index: Option<usize>,
    pub search: SearchConfig<f64>,
}

impl LandscapeSetup {
    /// SI with `tau = 0.4`, two candidate directions per node.
    pub fn new(kappa: f64) -> Self {
        let mut dynamics = SchemeConfig::new(Scheme::SemiImplicit, 0.4, 1);
        dynamics.max_steps = 400_000;
        dynamics.trajectory_stride = Some(usize::MAX);
        Self {
            kappa,
            mesh_exp: 7,
            target_index: None,
            search: SearchConfig::new(dynamics),
        }
    }
}

pub fn allen_cahn_landscape(
    setup: &LandscapeSetup,
) -> Result<(AllenCahn<f64>, LandscapeGraph<f64>)> {
    let model = AllenCahn::new(setup.kappa, setup.mesh_exp)?;
    let target = setup
        .target_index
        .unwrap_or_else(|| model.zero_state_index());
    let mut graph = seed_graph(&model, &vec![1.0; model.dim()], &setup.search)?;
    let root = graph.root.clone();
    upward_from(&model, &mut graph, &root, target, &setup.search)?;
    Ok((model, graph))
}

/// Starting state of the first search of index `i` that produced a verified
/// node of index `i`, for each requested `i`.
pub fn landscape_seeds(
    model: &dyn EnergyModel<f64>,
    graph: &LandscapeGraph<f64>,
    cfg: &SearchConfig<f64>,
    indices: &[usize],
) -> Result<Vec<(usize, Option<SaddleState<f64>>)>> {
    indices
        .iter()
        .map(|&i| {
            let found = graph.runs.iter().find(|r| {
                r.index_k == i
                    && r.child
                        .as_deref()
                        .and_then(|c| graph.node(c))
                        .is_some_and(|n| n.morse_index == i)
            });
            Ok((
                i,
                found.map(|r| run_seed(model, graph, r, cfg)).transpose()?,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub index: usize,
    pub n_iter: usize,
    pub n_force: u64,
    pub cpu_seconds: f64,
    pub termination: Option<Termination>,
    pub flagged: bool,
    pub max_orthonormality_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchTable {
    pub problem: String,
    pub scheme: Scheme,
    pub tau: f64,
    pub rows: Vec<BenchRow>,
}

/// One saddle search per seed with `cfg` (its `index_k` follows the seed).
/// Rows without a seed or without convergence are flagged.
pub fn landscape_bench(
    model: &dyn EnergyModel<f64>,
    seeds: &[(usize, Option<SaddleState<f64>>)],
    cfg: &SchemeConfig<f64>,
) -> Result<BenchTable> {
    let rows = seeds
        .par_iter()
        .map(|(index, seed)| -> Result<BenchRow> {
            let Some(seed) = seed else {
                return Ok(BenchRow {
                    index: *index,
                    n_iter: 0,
                    n_force: 0,
                    cpu_seconds: 0.0,
                    termination: None,
                    flagged: true,
                    max_orthonormality_defect: 0.0,
                });
            };
            let mut c = *cfg;
            c.index_k = seed.index();
            c.trajectory_stride = Some(usize::MAX);
            let rec = run(model, seed, &c)?;
            Ok(BenchRow {
                index: *index,
                n_iter: rec.n_iter,
                n_force: rec.counters.n_force,
                cpu_seconds: rec.wall_seconds,
                flagged: !rec.converged(),
                termination: Some(rec.termination),
                max_orthonormality_defect: rec.max_orthonormality_defect,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchTable {
        problem: model.name().to_string(),
        scheme: cfg.scheme,
        tau: cfg.tau,
        rows,
    })
}

impl BenchTable {
    pub fn any_flagged(&self) -> bool {
        self.rows.iter().any(|r| r.flagged)
    }

    /// Header `index,n_iter,n_f,cpu_seconds,flagged`.
    pub fn to_csv(&self) -> Result<String> {
        let header = ["index", "n_iter", "n_f", "cpu_seconds", "flagged"].map(String::from);
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.index.to_string(),
                    r.n_iter.to_string(),
                    r.n_force.to_string(),
                    cell(r.cpu_seconds),
                    r.flagged.to_string(),
                ]
            })
            .collect();
        csv_string(&header, &rows)
    }
}
