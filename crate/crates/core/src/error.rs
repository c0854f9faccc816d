use thiserror::Error;

pub type Result<T> = std::result::Result<T, QprocError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QprocError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("Hilbert-space dimension {dim} exceeds the configured limit {limit}")]
    Resource { dim: usize, limit: usize },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    /// The target form leaks into the null space of the Fisher matrix, so the
    /// marginal variance of the estimate is infinite.
    #[error("unbounded variance: form has a component of norm {residual:e} in the Fisher null space")]
    UnboundedVariance { residual: f64 },

    #[error("inconsistent derivative: dρ has weight {weight:e} where the state has no support")]
    InconsistentDerivative { weight: f64 },

    #[error("measurement model error: {0}")]
    Model(String),

    #[error("bound chain violated at link {link}: excess {excess:e}")]
    ChainViolation { link: ChainLink, excess: f64 },

    #[error("minimization did not converge: {message}")]
    Numerical { message: String, best: Vec<f64> },

    #[error("unsupported dimension N = {0}")]
    UnsupportedDimension(usize),

    #[error("unsupported generic corner: {0}")]
    UnsupportedCorner(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("degenerate model: jacobian condition number {condition:e}")]
    DegenerateModel { condition: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ChainLink {
    /// F_bb ≤ Q_bb
    ClassicalQuantum,
    /// Q_bb ≤ ‖b‖²
    QuantumProcess,
}

impl std::fmt::Display for ChainLink {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChainLink::ClassicalQuantum => write!(f, "F_bb <= Q_bb"),
            ChainLink::QuantumProcess => write!(f, "Q_bb <= |b|^2"),
        }
    }
}

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(QprocError::Argument(msg.into()))
}
