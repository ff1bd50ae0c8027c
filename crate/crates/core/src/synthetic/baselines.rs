use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::cluster::{frobenius_distance_matrix, kmeans_vectorized, ward_cluster};
use crate::error::{RccmError, Result};
use crate::linalg::{PrecisionMatrix, SymMatrix};
use crate::panel::TimeSeriesPanel;
use crate::solvers::{accept_last_iterate, glasso_fit, SolverOptions};

const KMEANS_RESTARTS: usize = 10;

/// Labels and estimates from a two-step method. `group_precisions` is `None`
/// for methods without cluster-level estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineFit {
    pub labels: Vec<usize>,
    pub subject_precisions: Vec<PrecisionMatrix>,
    pub group_precisions: Option<Vec<PrecisionMatrix>>,
}

fn per_subject_glasso(panel: &TimeSeriesPanel, lambda: f64, opts: &SolverOptions) -> Result<Vec<PrecisionMatrix>> {
    panel
        .subjects()
        .par_iter()
        .map(|s| accept_last_iterate(glasso_fit(s.sample_cov(), lambda, opts)))
        .collect()
}

/// Graphical lasso per subject, then k-means on the vectorized estimates.
pub fn glasso_kmeans_baseline(
    panel: &TimeSeriesPanel,
    lambda1: f64,
    groups: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<BaselineFit> {
    let subject_precisions = per_subject_glasso(panel, lambda1, opts)?;
    let labels = kmeans_vectorized(&subject_precisions, groups, seed, KMEANS_RESTARTS)?;
    Ok(BaselineFit {
        labels,
        subject_precisions,
        group_precisions: None,
    })
}

/// Ward clustering of lightly penalized per-subject estimates, then one
/// graphical lasso per cluster on the pooled covariance sum_k n_k S_k / sum_k n_k.
/// Every member receives its cluster's estimate.
pub fn ward_pooled_baseline(
    panel: &TimeSeriesPanel,
    init_lambda: f64,
    pooled_lambda: f64,
    groups: usize,
    opts: &SolverOptions,
) -> Result<BaselineFit> {
    let estimates = per_subject_glasso(panel, init_lambda, opts)?;
    let labels = ward_cluster(&frobenius_distance_matrix(&estimates)?, groups)?;
    let p = panel.p();
    let group_precisions: Vec<PrecisionMatrix> = (0..groups)
        .into_par_iter()
        .map(|g| {
            let mut pooled = DMatrix::zeros(p, p);
            let mut total = 0.0;
            for (subject, _) in panel.subjects().iter().zip(&labels).filter(|(_, &l)| l == g) {
                let n = subject.n() as f64;
                pooled += subject.sample_cov().as_matrix() * n;
                total += n;
            }
            if total == 0.0 {
                return Err(RccmError::EmptyCluster {
                    cluster: g,
                    iteration: None,
                });
            }
            let s = SymMatrix::new(pooled / total)?;
            accept_last_iterate(glasso_fit(&s, pooled_lambda, opts))
        })
        .collect::<Result<_>>()?;
    let subject_precisions = labels.iter().map(|&l| group_precisions[l].clone()).collect();
    Ok(BaselineFit {
        labels,
        subject_precisions,
        group_precisions: Some(group_precisions),
    })
}
