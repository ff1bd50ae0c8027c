//! Convex subproblem solvers shared by the model, the baselines and model
//! selection: the graphical lasso, the covariance graphical lasso, and the
//! Wishart log-density.

mod covglasso;
mod glasso;
mod wishart;

pub use covglasso::{covglasso_fit, covglasso_kkt_residual, covglasso_objective};
pub use glasso::{glasso_fit, glasso_kkt_residual, glasso_objective};
pub use wishart::{log_multivariate_gamma, wishart_log_density};

use crate::error::{RccmError, Result};
use crate::linalg::PrecisionMatrix;

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Warm start.
    pub initial_iterate: Option<PrecisionMatrix>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tolerance: DEFAULT_TOLERANCE,
            initial_iterate: None,
        }
    }
}

impl SolverOptions {
    pub fn with_warm_start(&self, init: Option<PrecisionMatrix>) -> Self {
        SolverOptions {
            initial_iterate: init,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(RccmError::invalid("solver tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(RccmError::invalid("solver max_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Accept the last iterate of a solver that ran out of iterations. Both
/// solvers only ever descend, so the iterate is still a valid block update.
pub(crate) fn accept_last_iterate(res: Result<PrecisionMatrix>) -> Result<PrecisionMatrix> {
    match res {
        Err(RccmError::Convergence {
            solver,
            residual,
            last,
            ..
        }) => {
            log::debug!("{solver} stopped at residual {residual:.3e}; using last iterate");
            PrecisionMatrix::new(*last)
        }
        other => other,
    }
}

/// Stationarity residual shared by both lasso-type solvers: `grad` is the
/// gradient of the smooth part, `x` the iterate, `penalty` the off-diagonal
/// lasso weight.
pub(crate) fn lasso_kkt_residual(
    grad: &nalgebra::DMatrix<f64>,
    x: &nalgebra::DMatrix<f64>,
    penalty: f64,
) -> f64 {
    let p = x.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..p {
        for i in 0..p {
            let r = if i == j {
                grad[(i, j)].abs()
            } else if x[(i, j)] != 0.0 {
                (grad[(i, j)] + penalty * x[(i, j)].signum()).abs()
            } else {
                (grad[(i, j)].abs() - penalty).max(0.0)
            };
            worst = worst.max(r);
        }
    }
    worst
}
