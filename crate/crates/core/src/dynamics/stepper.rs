use super::state::{SaddleState, Scheme, SchemeConfig, StepDiagnostics};
use crate::error::{check_dim, HisdError, LinearSystem, Result};
use crate::linalg::gmres::gmres_solve;
use crate::linalg::gram_schmidt::gram_schmidt_append;
use crate::linalg::vector::{axpy, distance, dot, reflect};
use crate::linalg::FnOperator;
use crate::model::{weighted_norm, EnergyModel, Evaluator, HvpMode};
use crate::Scalar;

/// Continuous right-hand side
/// `dx/dt = beta (I - 2 sum_j v_j v_j^T) F(x)`,
/// `dv_i/dt = gamma (I - v_i v_i^T - 2 sum_{j<i} v_j v_j^T) J(x) v_i`.
pub fn hisd_rhs<T: Scalar>(
    eval: &mut Evaluator<'_, T>,
    state: &SaddleState<T>,
    beta: T,
    gamma: T,
    mode: HvpMode<T>,
) -> Result<(Vec<T>, Vec<Vec<T>>)> {
    let mut dx = eval.force(&state.x)?;
    reflect(&state.frame, &mut dx);
    dx.iter_mut().for_each(|e| *e = *e * beta);

    let mut dv = Vec::with_capacity(state.index());
    for (i, vi) in state.frame.iter().enumerate() {
        let jv = eval.hvp(&state.x, vi, mode)?;
        dv.push(direction_rate(&state.frame, i, &jv, gamma));
    }
    Ok((dx, dv))
}

/// `gamma (I - v_i v_i^T - 2 sum_{j<i} v_j v_j^T) w`.
fn direction_rate<T: Scalar>(frame: &[Vec<T>], i: usize, w: &[T], gamma: T) -> Vec<T> {
    let two = T::lit(2.0);
    let mut out = w.to_vec();
    let c = dot(&frame[i], w);
    axpy(-c, &frame[i], &mut out);
    for vj in &frame[..i] {
        let c = dot(vj, w);
        axpy(-two * c, vj, &mut out);
    }
    out.iter_mut().for_each(|e| *e = *e * gamma);
    out
}

struct ForceCache<T> {
    x: Vec<T>,
    force: Vec<T>,
    nonlinear: Vec<T>,
}

/// One run's stepping context: configuration, counters and a force cache so
/// the stopping test and the next step share a single force query.
pub struct Stepper<'m, T: Scalar> {
    eval: Evaluator<'m, T>,
    cfg: SchemeConfig<T>,
    cache: Option<ForceCache<T>>,
}

impl<'m, T: Scalar> Stepper<'m, T> {
    pub fn new(model: &'m dyn EnergyModel<T>, cfg: SchemeConfig<T>) -> Result<Self> {
        cfg.validate()?;
        if cfg.index_k > model.dim() {
            return Err(HisdError::InvalidParameter(format!(
                "index {} exceeds dimension {}",
                cfg.index_k,
                model.dim()
            )));
        }
        if cfg.exact_hvp && !model.has_exact_hvp() {
            return Err(HisdError::InvalidParameter(format!(
                "model `{}` has no exact Hessian-vector product",
                model.name()
            )));
        }
        Ok(Self {
            eval: Evaluator::new(model),
            cfg,
            cache: None,
        })
    }

    pub fn config(&self) -> &SchemeConfig<T> {
        &self.cfg
    }

    pub fn evaluator(&mut self) -> &mut Evaluator<'m, T> {
        &mut self.eval
    }

    pub fn counter(&self) -> crate::model::QueryCounter {
        self.eval.counter()
    }

    /// `F(x)`, reusing the cached value when `x` is unchanged.
    pub fn force_at(&mut self, x: &[T]) -> Result<&[T]> {
        self.ensure_cache(x)?;
        Ok(&self.cache.as_ref().expect("cache filled").force)
    }

    fn ensure_cache(&mut self, x: &[T]) -> Result<()> {
        let hit = matches!(&self.cache, Some(c) if c.x.as_slice() == x);
        if !hit {
            let (force, nonlinear) = self.eval.force_split(x)?;
            self.cache = Some(ForceCache {
                x: x.to_vec(),
                force,
                nonlinear,
            });
        }
        Ok(())
    }

    fn check_state(&self, state: &SaddleState<T>) -> Result<()> {
        check_dim(self.eval.dim(), state.x.len())?;
        if state.index() != self.cfg.index_k {
            return Err(HisdError::InvalidParameter(format!(
                "state carries {} directions but the scheme is configured for index {}",
                state.index(),
                self.cfg.index_k
            )));
        }
        for v in &state.frame {
            check_dim(self.eval.dim(), v.len())?;
        }
        Ok(())
    }

    pub fn step(&mut self, state: &SaddleState<T>) -> Result<(SaddleState<T>, StepDiagnostics<T>)> {
        match self.cfg.scheme {
            Scheme::Explicit => self.explicit_step(state),
            Scheme::SemiImplicit => self.semi_implicit_step(state),
        }
    }

    /// Forward Euler in all variables followed by sequential Gram-Schmidt.
    pub fn explicit_step(
        &mut self,
        state: &SaddleState<T>,
    ) -> Result<(SaddleState<T>, StepDiagnostics<T>)> {
        self.check_state(state)?;
        let tau = self.cfg.tau;
        let mode = self.cfg.hvp_mode();

        self.ensure_cache(&state.x)?;
        let cache = self.cache.as_ref().expect("cache filled");
        let force_norm = weighted_norm(self.eval.model(), &cache.force);
        let mut dx = cache.force.clone();
        reflect(&state.frame, &mut dx);
        let mut x_new = state.x.clone();
        axpy(tau * self.cfg.beta, &dx, &mut x_new);

        let mut tildes = Vec::with_capacity(state.index());
        for (i, vi) in state.frame.iter().enumerate() {
            let jv = self.eval.hvp(&state.x, vi, mode)?;
            let rate = direction_rate(&state.frame, i, &jv, self.cfg.gamma);
            let mut vt = vi.clone();
            axpy(tau, &rate, &mut vt);
            tildes.push(vt);
        }

        let mut frame: Vec<Vec<T>> = Vec::with_capacity(state.index());
        let mut diag = StepDiagnostics {
            tilde_gap: Vec::with_capacity(state.index()),
            gmres_iters: Vec::new(),
            y_norms: Vec::with_capacity(state.index()),
            force_norm,
            gmres_residuals: Vec::new(),
        };
        for vt in tildes {
            let (v, y) = gram_schmidt_append(&vt, &frame)?;
            diag.tilde_gap.push(distance(&vt, &v));
            diag.y_norms.push(y);
            frame.push(v);
        }
        Ok((self.advance(state, x_new, frame), diag))
    }

    /// Linear part implicit, nonlinear part explicit in `x`; each direction
    /// solved implicitly in `J(x_n)` and orthonormalized against the
    /// directions already accepted in this step.
    pub fn semi_implicit_step(
        &mut self,
        state: &SaddleState<T>,
    ) -> Result<(SaddleState<T>, StepDiagnostics<T>)> {
        self.check_state(state)?;
        let n = state.dim();
        let tau = self.cfg.tau;
        let tb = tau * self.cfg.beta;
        let tg = tau * self.cfg.gamma;
        let mode = self.cfg.hvp_mode();
        let gmres_cfg = self.cfg.gmres;

        self.ensure_cache(&state.x)?;
        let cache = self.cache.as_ref().expect("cache filled");
        let force_norm = weighted_norm(self.eval.model(), &cache.force);

        // G x_n = a
        let mut rhs = cache.nonlinear.clone();
        reflect(&state.frame, &mut rhs);
        let mut a = state.x.clone();
        axpy(tb, &rhs, &mut a);

        let old_frame = &state.frame;
        let eval = &mut self.eval;
        let mut tmp = vec![T::zero(); n];
        let mut g_op = FnOperator::new(n, |y: &[T], out: &mut [T]| {
            if eval.linear_into(y, &mut tmp).is_err() {
                out.iter_mut().for_each(|o| *o = T::nan());
                return;
            }
            reflect(old_frame, &mut tmp);
            for ((o, &yi), &ti) in out.iter_mut().zip(y).zip(&tmp) {
                *o = yi - tb * ti;
            }
        });
        let (x_new, rep) = gmres_solve(&mut g_op, &a, &gmres_cfg)?;
        if !rep.converged {
            return Err(HisdError::SolveFailed {
                system: LinearSystem::Position,
                iterations: rep.iterations,
                residual: rep.final_relative_residual().to_f64_lossy(),
            });
        }

        let mut diag = StepDiagnostics {
            tilde_gap: Vec::with_capacity(state.index()),
            gmres_iters: vec![rep.iterations],
            y_norms: Vec::with_capacity(state.index()),
            force_norm,
            gmres_residuals: vec![rep.residual_history],
        };

        let mut frame: Vec<Vec<T>> = Vec::with_capacity(state.index());
        for (i, v_old) in state.frame.iter().enumerate() {
            let jv = self.eval.hvp(&x_new, v_old, mode)?;
            let rayleigh = dot(v_old, &jv);
            let mut b = v_old.clone();
            b.iter_mut().for_each(|e| *e = *e - tg * rayleigh * *e);

            let eval = &mut self.eval;
            let accepted = &frame;
            let x_ref = &x_new;
            let mut h_op =
                FnOperator::new(n, |y: &[T], out: &mut [T]| match eval.hvp(x_ref, y, mode) {
                    Ok(mut jy) => {
                        reflect(accepted, &mut jy);
                        for ((o, &yi), &ji) in out.iter_mut().zip(y).zip(&jy) {
                            *o = yi - tg * ji;
                        }
                    }
                    Err(_) => out.iter_mut().for_each(|o| *o = T::nan()),
                })
                .with_query_cost(2);
            let (vt, rep) = gmres_solve(&mut h_op, &b, &gmres_cfg)?;
            if !rep.converged {
                return Err(HisdError::SolveFailed {
                    system: LinearSystem::Direction(i),
                    iterations: rep.iterations,
                    residual: rep.final_relative_residual().to_f64_lossy(),
                });
            }
            diag.gmres_iters.push(rep.iterations);
            diag.gmres_residuals.push(rep.residual_history);

            let (v, y) = gram_schmidt_append(&vt, &frame)?;
            diag.tilde_gap.push(distance(&vt, &v));
            diag.y_norms.push(y);
            frame.push(v);
        }
        Ok((self.advance(state, x_new, frame), diag))
    }

    fn advance(&self, state: &SaddleState<T>, x: Vec<T>, frame: Vec<Vec<T>>) -> SaddleState<T> {
        let step = state.step + 1;
        SaddleState {
            x,
            frame,
            step,
            time: T::from_usize(step).expect("step count fits") * self.cfg.tau,
        }
    }
}

/// One explicit step with a fresh evaluation context.
pub fn explicit_step<T: Scalar>(
    model: &dyn EnergyModel<T>,
    state: &SaddleState<T>,
    cfg: &SchemeConfig<T>,
) -> Result<(SaddleState<T>, StepDiagnostics<T>)> {
    if cfg.scheme != Scheme::Explicit {
        return Err(HisdError::InvalidParameter(
            "explicit_step needs scheme = ex".into(),
        ));
    }
    Stepper::new(model, *cfg)?.explicit_step(state)
}

/// One semi-implicit step with a fresh evaluation context.
pub fn semi_implicit_step<T: Scalar>(
    model: &dyn EnergyModel<T>,
    state: &SaddleState<T>,
    cfg: &SchemeConfig<T>,
) -> Result<(SaddleState<T>, StepDiagnostics<T>)> {
    if cfg.scheme != Scheme::SemiImplicit {
        return Err(HisdError::InvalidParameter(
            "semi_implicit_step needs scheme = si".into(),
        ));
    }
    Stepper::new(model, *cfg)?.semi_implicit_step(state)
}
