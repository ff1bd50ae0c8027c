//! The random covariance clustering model: subject precision matrices drawn
//! from a mixture of Wisharts centered at cluster precision matrices, fitted
//! by expectation / conditional maximization.

mod fit;
mod objective;
mod updates;

pub use fit::{initialize, rccm_fit, rccm_fit_with_retries, run_em, EmIteration, RetryOutcome};
pub use objective::penalized_objective;
pub use updates::{
    group_block_input, hard_assignments, subject_block_input, update_group_precisions, update_pi,
    update_responsibilities, update_subject_precisions,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{RccmError, Result};
use crate::linalg::PrecisionMatrix;
use crate::panel::TimeSeriesPanel;
use crate::solvers::SolverOptions;

pub const EMPTY_CLUSTER_MASS: f64 = 1e-8;

/// (lambda1, lambda2, lambda3) and the number of clusters.
///
/// `lambda1` penalizes subject-level off-diagonals, `lambda2` is the Wishart
/// degrees of freedom (larger means subjects sit closer to their cluster
/// center), `lambda3` penalizes cluster-level off-diagonals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub groups: usize,
}

impl TuningParams {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64, groups: usize) -> Self {
        TuningParams {
            lambda1,
            lambda2,
            lambda3,
            groups,
        }
    }

    pub fn with_groups(self, groups: usize) -> Self {
        TuningParams { groups, ..self }
    }

    /// Check the parameter constraints against a panel; the error names the
    /// first offending subject.
    pub fn validate_for(&self, panel: &TimeSeriesPanel) -> Result<()> {
        if !(self.lambda1 >= 0.0) || !(self.lambda3 >= 0.0) || !self.lambda1.is_finite() || !self.lambda3.is_finite() {
            return Err(RccmError::invalid("lambda1 and lambda3 must be finite and nonnegative"));
        }
        if self.groups == 0 {
            return Err(RccmError::invalid("number of clusters must be at least 1"));
        }
        let p = panel.p() as f64;
        if !(self.lambda2 > p - 1.0) || !self.lambda2.is_finite() {
            return Err(RccmError::InvalidTuning {
                subject: 0,
                reason: format!("lambda2 = {} must exceed p - 1 = {}", self.lambda2, p - 1.0),
            });
        }
        for (k, s) in panel.subjects().iter().enumerate() {
            let denom = s.n() as f64 + self.lambda2 - p - 1.0;
            if !(denom > 0.0) {
                return Err(RccmError::InvalidTuning {
                    subject: k,
                    reason: format!("n_k + lambda2 - p - 1 = {denom} is not positive"),
                });
            }
        }
        Ok(())
    }
}

/// Posterior cluster-membership probabilities, one column per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponsibilityMatrix(DMatrix<f64>);

impl ResponsibilityMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        for (k, col) in values.column_iter().enumerate() {
            if col.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(RccmError::invalid(format!("responsibilities for subject {k} leave [0, 1]")));
            }
            if (col.sum() - 1.0).abs() > 1e-10 {
                return Err(RccmError::invalid(format!("responsibilities for subject {k} do not sum to 1")));
            }
        }
        Ok(ResponsibilityMatrix(values))
    }

    /// Hard 0/1 responsibilities from labels in `0..groups`.
    pub fn one_hot(labels: &[usize], groups: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= groups) {
            return Err(RccmError::invalid(format!("label {bad} out of range for {groups} clusters")));
        }
        Ok(ResponsibilityMatrix(DMatrix::from_fn(groups, labels.len(), |g, k| {
            if labels[k] == g {
                1.0
            } else {
                0.0
            }
        })))
    }

    pub fn groups(&self) -> usize {
        self.0.nrows()
    }

    pub fn subjects(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, g: usize, k: usize) -> f64 {
        self.0[(g, k)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Total responsibility mass of cluster g.
    pub fn mass(&self, g: usize) -> f64 {
        self.0.row(g).iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureWeights(Vec<f64>);

impl MixtureWeights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(*v >= 0.0)) || (values.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(RccmError::invalid("mixture weights must be nonnegative and sum to 1"));
        }
        Ok(MixtureWeights(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub subject_precisions: Vec<PrecisionMatrix>,
    pub group_precisions: Vec<PrecisionMatrix>,
    pub weights: MixtureWeights,
    pub responsibilities: ResponsibilityMatrix,
    pub iteration: usize,
    pub max_entry_change: f64,
    pub converged: bool,
}

impl ModelState {
    pub fn hard_assignments(&self) -> Vec<usize> {
        hard_assignments(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Ward clustering of per-subject graphical lasso estimates.
    Ward,
    /// Random nonempty hard assignment drawn from the `init` stream.
    Random { attempt: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub epsilon: f64,
    pub max_em_iterations: usize,
    pub init_glasso_lambda: f64,
    pub seed: u64,
    pub init: InitStrategy,
    pub solver: SolverOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            epsilon: 1e-3,
            max_em_iterations: 200,
            init_glasso_lambda: 1e-3,
            seed: 0,
            init: InitStrategy::Ward,
            solver: SolverOptions::default(),
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(RccmError::invalid("epsilon must be positive"));
        }
        if !(self.init_glasso_lambda > 0.0) {
            return Err(RccmError::invalid("initialization penalty must be positive"));
        }
        if self.max_em_iterations == 0 {
            return Err(RccmError::invalid("max_em_iterations must be at least 1"));
        }
        self.solver.validate()
    }
}
