use hisd::problems::benchmark_initial_data;
use hisd::{EnergyModel, ProblemName, ProblemSpec, SaddleState};
use nalgebra::{DMatrix, DVector};

pub fn two_d(name: ProblemName, k: usize) -> (Box<dyn EnergyModel<f64>>, SaddleState<f64>) {
    let model = ProblemSpec::new(name).build::<f64>().unwrap();
    let (x0, frame) = benchmark_initial_data(name, k).unwrap();
    (model, SaddleState::new(x0, frame).unwrap())
}

pub fn matrix_of(n: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = f(&e);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    m
}

pub fn reflector(frame: &[DVector<f64>], n: usize) -> DMatrix<f64> {
    let mut r = DMatrix::identity(n, n);
    for v in frame {
        r -= v * v.transpose() * 2.0;
    }
    r
}

/// Dense direct-solve version of one semi-implicit step.
pub fn si_oracle(
    model: &dyn EnergyModel<f64>,
    state: &SaddleState<f64>,
    tau: f64,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = state.dim();
    let l = matrix_of(n, |e| {
        let mut out = vec![0.0; n];
        model.apply_linear(e, &mut out);
        out
    });
    let mut nl = vec![0.0; n];
    model.apply_nonlinear(&state.x, &mut nl);
    let old: Vec<DVector<f64>> = state
        .frame
        .iter()
        .map(|v| DVector::from_column_slice(v))
        .collect();
    let r = reflector(&old, n);
    let g = DMatrix::identity(n, n) - &r * &l * tau;
    let a = DVector::from_column_slice(&state.x) + &r * DVector::from_column_slice(&nl) * tau;
    let x_new = g.lu().solve(&a).unwrap();

    let j = matrix_of(n, |e| model.exact_hvp(x_new.as_slice(), e).unwrap());
    let mut accepted: Vec<DVector<f64>> = Vec::new();
    for v in &old {
        let rayleigh = v.dot(&(&j * v));
        let b = v - v * (tau * rayleigh);
        let h = DMatrix::identity(n, n) - reflector(&accepted, n) * &j * tau;
        let vt = h.lu().solve(&b).unwrap();
        let mut w = vt.clone();
        for u in &accepted {
            w -= u * u.dot(&vt);
        }
        accepted.push(w.normalize());
    }
    (
        x_new.as_slice().to_vec(),
        accepted.iter().map(|v| v.as_slice().to_vec()).collect(),
    )
}
