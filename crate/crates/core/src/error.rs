use thiserror::Error;

/// Which linear system inside a semi-implicit step failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearSystem {
    /// The position system `G x_n = a`.
    Position,
    /// The direction system `H_i v_i = b_i` (zero-based direction index).
    Direction(usize),
}

impl std::fmt::Display for LinearSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LinearSystem::Position => write!(f, "position system"),
            LinearSystem::Direction(i) => write!(f, "direction system {}", i + 1),
        }
    }
}

#[derive(Debug, Error)]
pub enum HisdError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical breakdown (non-finite value) at iteration {iteration}")]
    NumericalBreakdown { iteration: usize },

    #[error("degenerate direction: Gram-Schmidt residual {residual:e} below threshold")]
    DegenerateDirection { residual: f64 },

    #[error("GMRES did not converge on the {system} after {iterations} iterations (relative residual {residual:e})")]
    SolveFailed {
        system: LinearSystem,
        iterations: usize,
        residual: f64,
    },

    #[error("bracket [{lo}, {hi}] has no sign change of the convergence predicate; widen it")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = HisdError> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(HisdError::DimensionMismatch { expected, found })
    }
}
