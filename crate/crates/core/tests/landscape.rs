use hisd::landscape::{
    content_id, downward_search, hessian_spectrum, run_seed, seed_graph, symmetric_distance,
    upward_from, LandscapeGraph, SearchConfig,
};
use hisd::linalg::EigenConfig;
use hisd::{AllenCahn, EnergyModel, Scheme, SchemeConfig, Symmetry};

fn search_config() -> SearchConfig<f64> {
    let mut dynamics = SchemeConfig::new(Scheme::SemiImplicit, 0.4, 1);
    dynamics.max_steps = 200_000;
    dynamics.trajectory_stride = Some(usize::MAX);
    SearchConfig::new(dynamics)
}

fn coarse_landscape() -> (AllenCahn<f64>, LandscapeGraph<f64>) {
    let model = AllenCahn::new(0.02, 5).unwrap();
    let cfg = search_config();
    let mut graph = seed_graph(&model, &vec![1.0; model.dim()], &cfg).unwrap();
    let root = graph.root.clone();
    upward_from(&model, &mut graph, &root, model.zero_state_index(), &cfg).unwrap();
    (model, graph)
}

/// Smooth periodic profile with `2 m` interfaces, shifted by `s` cells.
fn interfaces(n: usize, m: usize, s: f64) -> Vec<f64> {
    let width = 2.0 * std::f64::consts::PI * (2.0f64 * 0.02).sqrt();
    (0..n)
        .map(|i| {
            let x = (i as f64 + s) / n as f64;
            ((2.0 * std::f64::consts::PI * m as f64 * x).sin() / width).tanh()
        })
        .collect()
}

#[test]
fn upward_search_climbs_to_zero_state() {
    let (model, graph) = coarse_landscape();
    let top = model.zero_state_index();
    assert_eq!(graph.max_index(), top);
    for n in graph.top_nodes() {
        assert!(
            n.x.iter().all(|v| v.abs() <= 1e-2),
            "top node {} is not u = 0",
            n.id
        );
        assert_eq!(n.morse_index, top, "{:?}", n.eigenvalues);
    }
    assert!(graph.is_connected());
    for n in &graph.nodes {
        assert!(n.force_norm <= 1e-4 * 10.0);
    }
    assert!(graph
        .runs
        .iter()
        .all(|r| r.max_orthonormality_defect <= 1e-10));
}

#[test]
fn downward_search_from_zero_reaches_both_constants() {
    let (model, graph) = coarse_landscape();
    let seed = graph.top_nodes()[0].clone();
    let down = downward_search(&model, &seed, &search_config()).unwrap();
    for c in [1.0, -1.0] {
        assert!(
            down.nodes
                .iter()
                .any(|n| n.x.iter().all(|v| (v - c).abs() <= 1e-2)),
            "u = {c} not reached"
        );
    }
    assert!(down
        .nodes
        .iter()
        .filter(|n| n.id != seed.id)
        .all(|n| n.morse_index < seed.morse_index));
}

#[test]
fn shifted_profiles_are_the_same_node() {
    let n = 128;
    let base = interfaces(n, 1, 0.0);
    let whole: Vec<f64> = (0..n).map(|i| base[(i + 13) % n]).collect();
    let sub = interfaces(n, 1, 0.37);
    assert!(symmetric_distance(&base, &whole, Symmetry::CyclicMirror) < 1e-12);
    assert!(symmetric_distance(&base, &sub, Symmetry::CyclicMirror) < 1e-3);
    assert!(symmetric_distance(&base, &sub, Symmetry::None) > 1e-2);
    assert_eq!(
        content_id(&base, Symmetry::CyclicMirror),
        content_id(&whole, Symmetry::CyclicMirror)
    );
}

#[test]
fn different_interface_counts_stay_distinct() {
    let one = interfaces(128, 1, 0.0);
    let two = interfaces(128, 2, 0.0);
    assert!(symmetric_distance(&one, &two, Symmetry::CyclicMirror) > 0.5);
}

#[test]
fn eigenvector_signs_are_reproducible() {
    let model = AllenCahn::new(0.02, 5).unwrap();
    let x: Vec<f64> = (0..model.dim())
        .map(|i| 0.2 * (0.4 * i as f64).sin())
        .collect();
    let nudged: Vec<f64> = x.iter().map(|v| v + 1e-15).collect();
    let a = hessian_spectrum(&model, &x, 4, &EigenConfig::default()).unwrap();
    let b = hessian_spectrum(&model, &nudged, 4, &EigenConfig::default()).unwrap();
    for (u, v) in a.vectors.iter().zip(&b.vectors) {
        let d: f64 = u
            .iter()
            .zip(v)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(d < 1e-8);
    }
}

#[test]
fn graph_json_round_trip_rebuilds_seeds() {
    let (model, graph) = coarse_landscape();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("graph.json");
    graph.write_json(&path).unwrap();
    let back = LandscapeGraph::<f64>::read_json(&path).unwrap();
    assert_eq!(back.nodes.len(), graph.nodes.len());
    assert_eq!(back.edges, graph.edges);
    assert_eq!(back.runs, graph.runs);
    let cfg = search_config();
    let run = graph.runs.iter().find(|r| r.child.is_some()).unwrap();
    let a = run_seed(&model, &graph, run, &cfg).unwrap();
    let b = run_seed(&model, &back, run, &cfg).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.frame, b.frame);
    assert_eq!(a.index(), run.index_k);
}
