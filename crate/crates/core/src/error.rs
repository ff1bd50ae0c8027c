use nalgebra::DMatrix;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, RccmError>;

#[derive(Debug, Clone, Error)]
pub enum RccmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The solver ran out of iterations. The last iterate is kept so callers
    /// can still use it as a descent step.
    #[error("{solver} did not converge in {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        last: Box<DMatrix<f64>>,
    },

    #[error("subject {subject}, column {column} is constant and cannot be standardized")]
    DegenerateColumn { subject: usize, column: usize },

    #[error(
        "invalid tuning for subject {subject}: {reason} (require lambda2 > p - 1 and n_k + lambda2 - p - 1 > 0)"
    )]
    InvalidTuning { subject: usize, reason: String },

    #[error("cluster {cluster} is empty{}", iteration.map(|i| format!(" at EM iteration {i}")).unwrap_or_default())]
    EmptyCluster {
        cluster: usize,
        iteration: Option<usize>,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl RccmError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        RccmError::InvalidInput(msg.into())
    }
}
