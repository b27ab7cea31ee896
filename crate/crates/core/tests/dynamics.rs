use hisd::io::to_json_string;
use hisd::{
    explicit_step, run, run_with_observer, semi_implicit_step, AllenCahn, Evaluator, ProblemName,
    ProblemSpec, Record, SaddleState, Scheme, SchemeConfig, Termination,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

mod common;
use common::{matrix_of, reflector, si_oracle, two_d};

fn cases() -> Vec<(ProblemName, usize)> {
    vec![
        (ProblemName::Eckhardt, 1),
        (ProblemName::Eckhardt, 2),
        (ProblemName::Stingray, 1),
        (ProblemName::Stingray, 2),
        (ProblemName::Rosenbrock, 1),
    ]
}

#[test]
fn semi_implicit_step_matches_dense_oracle() {
    for (name, k) in cases() {
        let (model, state) = two_d(name, k);
        for tau in [1.0 / 32.0, 0.2] {
            let mut cfg = SchemeConfig::new(Scheme::SemiImplicit, tau, k);
            cfg.exact_hvp = true;
            cfg.gmres.rel_tol = 1e-14;
            cfg.gmres.abs_tol = 0.0;
            let (next, _) = semi_implicit_step(model.as_ref(), &state, &cfg).unwrap();
            let (x, frame) = si_oracle(model.as_ref(), &state, tau);
            for (a, b) in next.x.iter().zip(&x) {
                assert!((a - b).abs() < 1e-8, "{name} k={k} tau={tau}: x {a} vs {b}");
            }
            for (v, w) in next.frame.iter().zip(&frame) {
                for (a, b) in v.iter().zip(w) {
                    assert!((a - b).abs() < 1e-8, "{name} k={k} tau={tau}: v {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn explicit_step_matches_forward_euler() {
    let (model, state) = two_d(ProblemName::Eckhardt, 2);
    let tau = 0.01;
    let mut cfg = SchemeConfig::new(Scheme::Explicit, tau, 2);
    cfg.exact_hvp = true;
    let (next, _) = explicit_step(model.as_ref(), &state, &cfg).unwrap();

    let old: Vec<DVector<f64>> = state
        .frame
        .iter()
        .map(|v| DVector::from_column_slice(v))
        .collect();
    let f = DVector::from_column_slice(&Evaluator::new(model.as_ref()).force(&state.x).unwrap());
    let x = DVector::from_column_slice(&state.x) + reflector(&old, 2) * f * tau;
    let j = matrix_of(2, |e| model.exact_hvp(&state.x, e).unwrap());
    let mut accepted: Vec<DVector<f64>> = Vec::new();
    for (i, v) in old.iter().enumerate() {
        let mut p = DMatrix::identity(2, 2) - v * v.transpose();
        for u in &old[..i] {
            p -= u * u.transpose() * 2.0;
        }
        let vt = v + p * (&j * v) * tau;
        let mut w = vt.clone();
        for u in &accepted {
            w -= u * u.dot(&vt);
        }
        accepted.push(w.normalize());
    }
    for (a, b) in next.x.iter().zip(x.iter()) {
        assert!((a - b).abs() < 1e-14);
    }
    for (v, w) in next.frame.iter().zip(&accepted) {
        for (a, b) in v.iter().zip(w.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
    assert_eq!(next.step, 1);
    assert!((next.time - tau).abs() < 1e-15);
}

#[test]
fn step_rejects_wrong_index() {
    let (model, state) = two_d(ProblemName::Eckhardt, 1);
    let cfg = SchemeConfig::new(Scheme::SemiImplicit, 0.1, 2);
    assert!(semi_implicit_step(model.as_ref(), &state, &cfg).is_err());
    let cfg = SchemeConfig::new(Scheme::Explicit, 0.1, 1);
    assert!(semi_implicit_step(model.as_ref(), &state, &cfg).is_err());
}

#[test]
fn runs_are_deterministic() {
    let (model, state) = two_d(ProblemName::Stingray, 1);
    let cfg = SchemeConfig::new(Scheme::SemiImplicit, 0.05, 1);
    let a = run(model.as_ref(), &state, &cfg).unwrap();
    let b = run(model.as_ref(), &state, &cfg).unwrap();
    assert_eq!(a.final_state, b.final_state);
    assert_eq!(a.counters, b.counters);
    assert_eq!(a.trajectory, b.trajectory);
}

#[test]
fn explicit_force_count_is_exact() {
    let (model, state) = two_d(ProblemName::Eckhardt, 2);
    let mut cfg = SchemeConfig::new(Scheme::Explicit, 0.01, 2);
    cfg.max_steps = 25;
    cfg.stop_force_norm = 1e-300;
    let rec = run(model.as_ref(), &state, &cfg).unwrap();
    assert_eq!(rec.termination, Termination::StepLimit);
    assert_eq!(rec.n_iter, 25);
    assert_eq!(rec.n_force(), 26 + 2 * 2 * 25);
}

#[test]
fn semi_implicit_force_count_includes_gmres_products() {
    let (model, state) = two_d(ProblemName::Stingray, 2);
    let mut cfg = SchemeConfig::new(Scheme::SemiImplicit, 0.05, 2);
    cfg.max_steps = 10;
    cfg.stop_force_norm = 1e-300;
    let mut direction_iters = 0u64;
    let rec = run_with_observer(model.as_ref(), &state, &cfg, |_, d| {
        direction_iters += d.gmres_iters[1..].iter().map(|&i| i as u64).sum::<u64>();
    })
    .unwrap();
    assert_eq!(rec.n_iter, 10);
    // per step: one Rayleigh product and one product per GMRES iteration, per direction
    assert_eq!(rec.n_force(), 11 + 2 * (10 * 2 + direction_iters));
}

#[test]
fn exact_hvp_runs_need_one_force_per_step() {
    let (model, state) = two_d(ProblemName::Eckhardt, 1);
    let mut cfg = SchemeConfig::new(Scheme::SemiImplicit, 0.05, 1);
    cfg.exact_hvp = true;
    let rec = run(model.as_ref(), &state, &cfg).unwrap();
    assert!(rec.converged());
    assert_eq!(rec.n_force(), rec.n_iter as u64 + 1);
}

#[test]
fn stopping_uses_grid_norm_for_fields() {
    let ac = AllenCahn::new(0.02, 5).unwrap();
    let n = 32;
    let x: Vec<f64> = (0..n)
        .map(|i| 0.9 + 0.05 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect();
    let state = SaddleState::new(x, vec![]).unwrap();
    let mut cfg = SchemeConfig::new(Scheme::SemiImplicit, 0.2, 0);
    cfg.exact_hvp = true;
    let rec = run(&ac, &state, &cfg).unwrap();
    assert!(rec.converged());
    let f = Evaluator::new(&ac).force(&rec.final_state.x).unwrap();
    let grid = (1.0 / n as f64).sqrt() * f.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((rec.final_force_norm - grid).abs() < 1e-15);
    assert!(grid <= 1e-4);
}

#[test]
fn divergence_is_reported() {
    let (model, state) = two_d(ProblemName::Rosenbrock, 1);
    let cfg = SchemeConfig::new(Scheme::Explicit, 0.5, 1);
    let rec = run(model.as_ref(), &state, &cfg).unwrap();
    assert_eq!(rec.termination, Termination::Diverged);
    assert!(!rec.converged());
}

#[test]
fn record_round_trips_through_json() {
    let (model, state) = two_d(ProblemName::Eckhardt, 1);
    let cfg = SchemeConfig::new(Scheme::SemiImplicit, 0.1, 1);
    let rec = run(model.as_ref(), &state, &cfg).unwrap();
    let text = to_json_string(&rec).unwrap();
    let back: Record = serde_json::from_str(&text).unwrap();
    assert_eq!(back.final_state, rec.final_state);
    assert_eq!(back.termination, rec.termination);
    assert_eq!(back.counters, rec.counters);
    assert_eq!(to_json_string(&back).unwrap(), text);

    let mut csv = Vec::new();
    rec.trajectory_csv(&mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "step,t,x_0,x_1,force_norm");
    assert_eq!(lines.count(), rec.trajectory.len());
}

#[test]
fn invalid_configs_are_rejected() {
    let (model, state) = two_d(ProblemName::Eckhardt, 1);
    let mut cfg = SchemeConfig::new(Scheme::SemiImplicit, -0.1, 1);
    assert!(run(model.as_ref(), &state, &cfg).is_err());
    cfg.tau = 0.1;
    cfg.dimer_length = Some(0.0);
    assert!(run(model.as_ref(), &state, &cfg).is_err());
    cfg.dimer_length = None;
    cfg.gmres.rel_tol = 2.0;
    assert!(run(model.as_ref(), &state, &cfg).is_err());
    assert!(SaddleState::new(vec![0.0, 0.0], vec![vec![1.0, 0.0]; 3]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn frames_stay_orthonormal(
        x0 in -1.0f64..1.0,
        x1 in -1.0f64..1.0,
        angle in 0.0f64..std::f64::consts::TAU,
        tau in 0.005f64..0.05,
        si in any::<bool>(),
    ) {
        let model = ProblemSpec::new(ProblemName::Stingray).build::<f64>().unwrap();
        let v1 = vec![angle.cos(), angle.sin()];
        let v2 = vec![-angle.sin(), angle.cos()];
        let state = SaddleState::new(vec![x0, x1], vec![v1, v2]).unwrap();
        let scheme = if si { Scheme::SemiImplicit } else { Scheme::Explicit };
        let mut cfg = SchemeConfig::new(scheme, tau, 2);
        cfg.max_steps = 40;
        let mut worst = 0.0f64;
        let _ = run_with_observer(model.as_ref(), &state, &cfg, |s, _| worst = worst.max(s.orthonormality_defect())).unwrap();
        prop_assert!(worst <= 1e-10, "defect {worst:e}");
    }
}
