use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, HisdError, Result};
use crate::linalg::gmres::GmresConfig;
use crate::linalg::gram_schmidt::orthonormalize;
use crate::linalg::vector::orthonormality_defect;
use crate::model::HvpMode;
use crate::Scalar;

/// Position plus an ordered orthonormal frame `v_1..v_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleState<T> {
    pub x: Vec<T>,
    pub frame: Vec<Vec<T>>,
    pub step: usize,
    pub time: T,
}

impl<T: Scalar> SaddleState<T> {
    /// A state at `t = 0`. The frame is orthonormalized in order.
    pub fn new(x: Vec<T>, frame: Vec<Vec<T>>) -> Result<Self> {
        if frame.len() > x.len() {
            return Err(HisdError::InvalidParameter(format!(
                "index {} exceeds dimension {}",
                frame.len(),
                x.len()
            )));
        }
        for v in &frame {
            check_dim(x.len(), v.len())?;
        }
        Ok(Self {
            frame: orthonormalize(&frame)?,
            x,
            step: 0,
            time: T::zero(),
        })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn index(&self) -> usize {
        self.frame.len()
    }

    pub fn orthonormality_defect(&self) -> T {
        orthonormality_defect(&self.frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[serde(rename = "ex")]
    Explicit,
    #[serde(rename = "si")]
    SemiImplicit,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Explicit => "ex",
            Scheme::SemiImplicit => "si",
        })
    }
}

impl FromStr for Scheme {
    type Err = HisdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ex" | "explicit" => Ok(Scheme::Explicit),
            "si" | "semi-implicit" | "semiimplicit" => Ok(Scheme::SemiImplicit),
            _ => Err(HisdError::InvalidParameter(format!("unknown scheme `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig<T> {
    pub scheme: Scheme,
    pub beta: T,
    pub gamma: T,
    pub tau: T,
    pub index_k: usize,
    /// `None` uses the time step as dimer length.
    pub dimer_length: Option<T>,
    /// Use the model's closed-form `J v` instead of dimer differences.
    pub exact_hvp: bool,
    pub gmres: GmresConfig<T>,
    pub stop_force_norm: T,
    pub max_steps: usize,
    /// `||x|| > divergence_threshold` terminates a run as diverged.
    pub divergence_threshold: T,
    /// `None`: every step for `N < 64`, every 10th otherwise.
    pub trajectory_stride: Option<usize>,
}

impl<T: Scalar> SchemeConfig<T> {
    pub fn new(scheme: Scheme, tau: T, index_k: usize) -> Self {
        Self {
            scheme,
            beta: T::one(),
            gamma: T::one(),
            tau,
            index_k,
            dimer_length: None,
            exact_hvp: false,
            gmres: GmresConfig::default(),
            stop_force_norm: T::lit(1e-4),
            max_steps: 100_000,
            divergence_threshold: T::lit(1e8),
            trajectory_stride: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: T, what: &str| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(HisdError::InvalidParameter(format!(
                    "{what} must be positive, got {v}"
                )))
            }
        };
        positive(self.beta, "beta")?;
        positive(self.gamma, "gamma")?;
        positive(self.tau, "tau")?;
        positive(self.stop_force_norm, "stop_force_norm")?;
        positive(self.divergence_threshold, "divergence_threshold")?;
        if let Some(l) = self.dimer_length {
            positive(l, "dimer_length")?;
        }
        if self.trajectory_stride == Some(0) {
            return Err(HisdError::InvalidParameter(
                "trajectory_stride must be >= 1".into(),
            ));
        }
        self.gmres.validate()
    }

    pub fn dimer_length(&self) -> T {
        self.dimer_length.unwrap_or(self.tau)
    }

    pub fn hvp_mode(&self) -> HvpMode<T> {
        if self.exact_hvp {
            HvpMode::Exact
        } else {
            HvpMode::Dimer(self.dimer_length())
        }
    }

    pub fn stride_for(&self, dim: usize) -> usize {
        self.trajectory_stride
            .unwrap_or(if dim >= 64 { 10 } else { 1 })
    }
}

/// Per-step quantities of interest for the error analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics<T> {
    /// `||v~_i - v_i||` per direction.
    pub tilde_gap: Vec<T>,
    /// GMRES iterations: position solve first, then each direction solve.
    /// Empty for the explicit scheme.
    pub gmres_iters: Vec<usize>,
    /// Gram-Schmidt residual norms `Y_i`.
    pub y_norms: Vec<T>,
    /// `||F||` at the start of the step.
    pub force_norm: T,
    /// Relative residual histories of each GMRES solve, same order as
    /// `gmres_iters`.
    pub gmres_residuals: Vec<Vec<T>>,
}
