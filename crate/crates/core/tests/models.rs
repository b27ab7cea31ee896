use hisd::linalg::vector::{distance, norm};
use hisd::model::force_consistency_error;
use hisd::problems::benchmark_initial_data;
use hisd::{AllenCahn, EnergyModel, Evaluator, HvpMode, ProblemName, ProblemSpec, Rosenbrock};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn two_d_models() -> Vec<Box<dyn EnergyModel<f64>>> {
    let mut out: Vec<Box<dyn EnergyModel<f64>>> = [
        ProblemName::Eckhardt,
        ProblemName::Stingray,
        ProblemName::Rosenbrock,
    ]
    .into_iter()
    .map(|n| ProblemSpec::new(n).build().unwrap())
    .collect();
    out.push(Box::new(Rosenbrock::new(0.1, -300.0).unwrap()));
    out
}

fn force(model: &dyn EnergyModel<f64>, x: &[f64]) -> Vec<f64> {
    Evaluator::new(model).force(x).unwrap()
}

fn dense_jacobian(model: &dyn EnergyModel<f64>, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = model.exact_hvp(x, &e).unwrap();
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    m
}

#[test]
fn forces_match_energy_finite_differences() {
    let points = [[-3.0, 2.0], [0.4, -0.7], [1.3, 0.2]];
    for m in two_d_models() {
        for p in &points {
            let err = force_consistency_error(m.as_ref(), p, 1e-5).unwrap();
            assert!(err < 1e-7, "{} at {p:?}: {err:e}", m.name());
        }
    }
    let ac = AllenCahn::new(0.001, 5).unwrap();
    let u: Vec<f64> = (0..32).map(|i| (0.7 * i as f64).sin() + 0.1).collect();
    assert!(force_consistency_error(&ac, &u, 1e-5).unwrap() < 1e-7);
}

#[test]
fn exact_hvp_matches_force_differences() {
    let x = [0.35, -0.8];
    for m in two_d_models() {
        let j = dense_jacobian(m.as_ref(), &x);
        let h = 1e-6;
        for c in 0..2 {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[c] += h;
            xm[c] -= h;
            let (fp, fm) = (force(m.as_ref(), &xp), force(m.as_ref(), &xm));
            for r in 0..2 {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                assert!(
                    (fd - j[(r, c)]).abs() < 1e-5 * j[(r, c)].abs().max(1.0),
                    "{}",
                    m.name()
                );
            }
        }
        assert!(
            (j.clone() - j.transpose()).abs().max() < 1e-9,
            "{} Jacobian not symmetric",
            m.name()
        );
    }
}

#[test]
fn dimer_error_is_second_order() {
    let x = [0.35, -0.8];
    let v = [0.6, 0.8];
    for m in two_d_models() {
        let exact = m.exact_hvp(&x, &v).unwrap();
        let mut ev = Evaluator::new(m.as_ref());
        let e1 = distance(&ev.dimer_hvp(&x, &v, 1e-2).unwrap(), &exact);
        let e2 = distance(&ev.dimer_hvp(&x, &v, 5e-3).unwrap(), &exact);
        if e1 <= 1e-12 * norm(&exact) {
            // cubic energy: the central difference is exact
            assert!(e2 <= 1e-12 * norm(&exact), "{}", m.name());
            continue;
        }
        let ratio = e1 / e2;
        assert!((3.5..=4.5).contains(&ratio), "{}: ratio {ratio}", m.name());
    }
}

#[test]
fn rosenbrock_saddle_spectrum() {
    let m = Rosenbrock::new(0.1, -300.0).unwrap();
    assert!(norm(&force(&m, &[1.0, 1.0])) < 1e-12);
    let spectrum = |mat: DMatrix<f64>| {
        let mut ev: Vec<f64> = SymmetricEigen::new(mat)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    };
    // the force Jacobian carries {-0.20, 599.20}; the Hessian of E is its negative
    let jac = spectrum(dense_jacobian(&m, &[1.0, 1.0]));
    assert!(
        (jac[0] + 0.2).abs() < 1e-2 && (jac[1] - 599.2).abs() < 1e-1,
        "{jac:?}"
    );
    let hess = spectrum(-dense_jacobian(&m, &[1.0, 1.0]));
    assert!(
        (hess[0] + 599.2).abs() < 1e-1 && (hess[1] - 0.2).abs() < 1e-2,
        "{hess:?}"
    );
}

#[test]
fn allen_cahn_linear_spectrum_matches_dense_oracle() {
    let ac = AllenCahn::new(0.001, 6).unwrap();
    let n = ac.dim();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let mut col = vec![0.0; n];
        ac.apply_linear(&e, &mut col);
        for i in 0..n {
            l[(i, j)] = col[i];
        }
    }
    let mut oracle: Vec<f64> = SymmetricEigen::new(l).eigenvalues.iter().copied().collect();
    oracle.sort_by(f64::total_cmp);
    let mut closed = ac.linear_eigenvalues();
    closed.sort_by(f64::total_cmp);
    for (a, b) in oracle.iter().zip(&closed) {
        assert!((a - b).abs() < 1e-9 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn zero_state_index_counts_unstable_modes() {
    for (kappa, expected) in [
        (0.02, 3),
        (0.005, 5),
        (0.0025, 7),
        (0.00125, 9),
        (0.001, 11),
    ] {
        let ac = AllenCahn::new(kappa, 7).unwrap();
        let n = 128.0;
        let count = (0..128)
            .filter(|&j| {
                let s = (std::f64::consts::PI * j as f64 / n).sin();
                1.0 - 4.0 * kappa * n * n * s * s > 0.0
            })
            .count();
        assert_eq!(count, expected);
        assert_eq!(ac.zero_state_index(), expected);
    }
}

#[test]
fn allen_cahn_constant_states_are_stationary() {
    let ac = AllenCahn::new(0.001, 7).unwrap();
    for c in [-1.0, 0.0, 1.0] {
        assert!(norm(&force(&ac, &vec![c; 128])) < 1e-14);
    }
    assert_eq!(ac.energy(&vec![1.0; 128]), Some(0.0));
}

#[test]
fn norm_weight_is_grid_l2_for_fields() {
    let ac = AllenCahn::new(0.001, 7).unwrap();
    assert!((ac.norm_weight() - (1.0f64 / 128.0).sqrt()).abs() < 1e-15);
    let (x0, _) = benchmark_initial_data::<f64>(ProblemName::Eckhardt, 1).unwrap();
    let m = ProblemSpec::new(ProblemName::Eckhardt)
        .build::<f64>()
        .unwrap();
    assert_eq!(m.norm_weight(), 1.0);
    assert_eq!(x0.len(), 2);
}

#[test]
fn exact_hvp_mode_counts_no_forces() {
    let m = ProblemSpec::new(ProblemName::Stingray)
        .build::<f64>()
        .unwrap();
    let mut ev = Evaluator::new(m.as_ref());
    ev.hvp(&[0.1, 0.2], &[1.0, 0.0], HvpMode::Exact).unwrap();
    ev.hvp(&[0.1, 0.2], &[1.0, 0.0], HvpMode::Dimer(1e-3))
        .unwrap();
    let c = ev.counter();
    assert_eq!(c.n_exact_hvp, 1);
    assert_eq!(c.n_force, 2);
}

proptest! {
    #[test]
    fn allen_cahn_jacobian_is_symmetric(seed in prop::collection::vec(-1.5f64..1.5, 16), a in prop::collection::vec(-1.0f64..1.0, 16), b in prop::collection::vec(-1.0f64..1.0, 16)) {
        let ac = AllenCahn::new(0.01, 4).unwrap();
        let ja = ac.exact_hvp(&seed, &a).unwrap();
        let jb = ac.exact_hvp(&seed, &b).unwrap();
        let lhs: f64 = ja.iter().zip(&b).map(|(p, q)| p * q).sum();
        let rhs: f64 = jb.iter().zip(&a).map(|(p, q)| p * q).sum();
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn allen_cahn_force_is_shift_equivariant(u in prop::collection::vec(-1.5f64..1.5, 16), s in 0usize..16) {
        let ac = AllenCahn::new(0.01, 4).unwrap();
        let shifted: Vec<f64> = (0..16).map(|i| u[(i + s) % 16]).collect();
        let f = force(&ac, &u);
        let fs = force(&ac, &shifted);
        for i in 0..16 {
            prop_assert!((fs[i] - f[(i + s) % 16]).abs() < 1e-9);
        }
    }
}
