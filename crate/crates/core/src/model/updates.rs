use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{MixtureWeights, ModelState, ResponsibilityMatrix, TuningParams, EMPTY_CLUSTER_MASS};
use crate::error::{RccmError, Result};
use crate::linalg::{self, PrecisionMatrix, SymMatrix};
use crate::panel::TimeSeriesPanel;
use crate::solvers::{accept_last_iterate, covglasso_fit, glasso_fit, SolverOptions};

/// pi_g = mean over subjects of w_gk.
pub fn update_pi(resp: &ResponsibilityMatrix) -> MixtureWeights {
    let k = resp.subjects() as f64;
    let mut pi: Vec<f64> = (0..resp.groups()).map(|g| resp.mass(g) / k).collect();
    // Columns sum to 1 within 1e-10; renormalize so the weights do so exactly.
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    MixtureWeights(pi)
}

/// The covariance-lasso input for cluster g: the responsibility-weighted
/// average of subject precisions and the effective penalty
/// lambda3 / (lambda2 * sum_k w_gk).
pub fn group_block_input(
    resp: &ResponsibilityMatrix,
    subject_precisions: &[PrecisionMatrix],
    tp: &TuningParams,
    g: usize,
) -> Result<(SymMatrix, f64)> {
    let mass = resp.mass(g);
    if mass < EMPTY_CLUSTER_MASS {
        return Err(RccmError::EmptyCluster {
            cluster: g,
            iteration: None,
        });
    }
    let p = subject_precisions[0].dim();
    let mut avg = DMatrix::zeros(p, p);
    for (k, om) in subject_precisions.iter().enumerate() {
        let w = resp.get(g, k);
        if w != 0.0 {
            avg += om.as_matrix() * w;
        }
    }
    avg /= mass;
    Ok((SymMatrix::new(avg)?, tp.lambda3 / (tp.lambda2 * mass)))
}

/// Cluster-level update: one covariance graphical lasso per cluster, warm
/// started at `previous` when given.
pub fn update_group_precisions(
    resp: &ResponsibilityMatrix,
    subject_precisions: &[PrecisionMatrix],
    tp: &TuningParams,
    opts: &SolverOptions,
    previous: Option<&[PrecisionMatrix]>,
) -> Result<Vec<PrecisionMatrix>> {
    if subject_precisions.len() != resp.subjects() {
        return Err(RccmError::invalid("responsibilities and subject precisions disagree on K"));
    }
    (0..resp.groups())
        .into_par_iter()
        .map(|g| {
            let (a, rho) = group_block_input(resp, subject_precisions, tp, g)?;
            let warm = previous.map(|prev| prev[g].clone());
            accept_last_iterate(covglasso_fit(&a, rho, &opts.with_warm_start(warm)))
        })
        .collect()
}

/// E-step. w_gk is proportional to
/// pi_g exp(-lambda2/2 tr(Omega_0g^{-1} Omega_k)) |Omega_0g|^{-lambda2/2};
/// the factors shared by every g cancel and are never evaluated.
pub fn update_responsibilities(
    subject_precisions: &[PrecisionMatrix],
    group_precisions: &[PrecisionMatrix],
    weights: &MixtureWeights,
    lambda2: f64,
) -> Result<ResponsibilityMatrix> {
    let groups = group_precisions.len();
    if weights.as_slice().len() != groups {
        return Err(RccmError::invalid("weights and group precisions disagree on G"));
    }
    if let Some(first) = group_precisions.first() {
        let p = first.dim() as f64;
        if !(lambda2 > p - 1.0) {
            return Err(RccmError::Domain(format!("lambda2 = {lambda2} must exceed p - 1")));
        }
    }
    let inverses: Vec<DMatrix<f64>> = group_precisions.iter().map(|g| g.inverse()).collect();
    let log_dets: Vec<f64> = group_precisions.iter().map(|g| g.log_det()).collect();

    let mut values = DMatrix::zeros(groups, subject_precisions.len());
    let mut logs = vec![0.0; groups];
    for (k, om) in subject_precisions.iter().enumerate() {
        for g in 0..groups {
            let tr = linalg::trace_product(&inverses[g], om.as_matrix());
            logs[g] = weights.0[g].ln() - 0.5 * lambda2 * (tr + log_dets[g]);
        }
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(RccmError::Numeric(format!(
                "all cluster log-densities for subject {k} are non-finite"
            )));
        }
        let total: f64 = logs.iter().map(|l| (l - max).exp()).sum();
        for g in 0..groups {
            values[(g, k)] = (logs[g] - max).exp() / total;
        }
    }
    Ok(ResponsibilityMatrix(values))
}

/// The graphical-lasso input for subject k:
/// (n_k S_k + lambda2 sum_g w_gk Omega_0g^{-1}) / (n_k + lambda2 - p - 1)
/// and the penalty lambda1 / (n_k + lambda2 - p - 1).
pub fn subject_block_input(
    panel: &TimeSeriesPanel,
    resp: &ResponsibilityMatrix,
    group_inverses: &[DMatrix<f64>],
    tp: &TuningParams,
    k: usize,
) -> Result<(SymMatrix, f64)> {
    let subject = panel.subject(k);
    let n = subject.n() as f64;
    let p = panel.p() as f64;
    let denom = n + tp.lambda2 - p - 1.0;
    if !(denom > 0.0) {
        return Err(RccmError::InvalidTuning {
            subject: k,
            reason: format!("n_k + lambda2 - p - 1 = {denom} is not positive"),
        });
    }
    let mut m = subject.sample_cov().as_matrix() * n;
    for (g, inv) in group_inverses.iter().enumerate() {
        let w = resp.get(g, k);
        if w != 0.0 {
            m += inv * (tp.lambda2 * w);
        }
    }
    m /= denom;
    Ok((SymMatrix::new(m)?, tp.lambda1 / denom))
}

/// Subject-level update: one graphical lasso per subject, warm started at
/// `previous` when given.
pub fn update_subject_precisions(
    panel: &TimeSeriesPanel,
    resp: &ResponsibilityMatrix,
    group_precisions: &[PrecisionMatrix],
    tp: &TuningParams,
    opts: &SolverOptions,
    previous: Option<&[PrecisionMatrix]>,
) -> Result<Vec<PrecisionMatrix>> {
    if resp.subjects() != panel.num_subjects() || resp.groups() != group_precisions.len() {
        return Err(RccmError::invalid("responsibility shape does not match panel and clusters"));
    }
    let inverses: Vec<DMatrix<f64>> = group_precisions.iter().map(|g| g.inverse()).collect();
    (0..panel.num_subjects())
        .into_par_iter()
        .map(|k| {
            let (m, penalty) = subject_block_input(panel, resp, &inverses, tp, k)?;
            let warm = previous.map(|prev| prev[k].clone());
            accept_last_iterate(glasso_fit(&m, penalty, &opts.with_warm_start(warm)))
        })
        .collect()
}

/// Per-subject argmax of the responsibilities; ties go to the smaller index.
pub fn hard_assignments(state: &ModelState) -> Vec<usize> {
    let resp = &state.responsibilities;
    (0..resp.subjects())
        .map(|k| {
            let mut best = 0;
            for g in 1..resp.groups() {
                if resp.get(g, k) > resp.get(best, k) {
                    best = g;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn resp(rows: usize, cols: usize, data: &[f64]) -> ResponsibilityMatrix {
        ResponsibilityMatrix::new(DMatrix::from_row_slice(rows, cols, data)).unwrap()
    }

    fn scalar(v: f64) -> PrecisionMatrix {
        PrecisionMatrix::from_row_slice(1, &[v]).unwrap()
    }

    #[test]
    fn pi_is_column_mean() {
        let pi = update_pi(&resp(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]));
        assert_abs_diff_eq!(pi.as_slice()[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pi.as_slice()[1], 1.0 / 3.0, epsilon = 1e-15);

        let pi = update_pi(&resp(2, 2, &[0.5, 0.5, 0.5, 0.5]));
        assert_eq!(pi.as_slice(), &[0.5, 0.5]);

        let pi = update_pi(&resp(2, 2, &[0.9, 0.6, 0.1, 0.4]));
        assert_abs_diff_eq!(pi.as_slice()[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(pi.as_slice()[1], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn single_cluster_responsibilities_are_one() {
        let subs = vec![scalar(1.0), scalar(2.0)];
        let w = update_responsibilities(&subs, &[scalar(1.5)], &MixtureWeights(vec![1.0]), 2.0).unwrap();
        assert_eq!(w.as_matrix().as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn identical_components_return_prior() {
        let subs = vec![scalar(1.0), scalar(3.0)];
        let w = update_responsibilities(&subs, &[scalar(2.0), scalar(2.0)], &MixtureWeights(vec![0.3, 0.7]), 4.0)
            .unwrap();
        for k in 0..2 {
            assert_abs_diff_eq!(w.get(0, k), 0.3, epsilon = 1e-12);
            assert_abs_diff_eq!(w.get(1, k), 0.7, epsilon = 1e-12);
        }
    }

    #[test]
    fn scalar_responsibility_oracle() {
        // log w_g = -lambda2/2 (omega / omega_0g + log omega_0g), lambda2 = 2
        let w = update_responsibilities(&[scalar(1.0)], &[scalar(1.0), scalar(4.0)], &MixtureWeights(vec![0.5, 0.5]), 2.0)
            .unwrap();
        let a = (-1.0f64).exp();
        let b = (-0.25f64).exp() / 4.0;
        assert_abs_diff_eq!(w.get(0, 0), a / (a + b), epsilon = 1e-12);
        assert_abs_diff_eq!(w.get(1, 0), b / (a + b), epsilon = 1e-12);
    }

    #[test]
    fn extreme_lambda2_does_not_underflow() {
        let w = update_responsibilities(&[scalar(1.0)], &[scalar(1.0), scalar(4.0)], &MixtureWeights(vec![0.5, 0.5]), 1e6)
            .unwrap();
        assert_abs_diff_eq!(w.get(0, 0) + w.get(1, 0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_cluster_is_reported() {
        let r = resp(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let subs = vec![scalar(1.0), scalar(2.0)];
        let tp = TuningParams::new(0.0, 2.0, 0.0, 2);
        match update_group_precisions(&r, &subs, &tp, &SolverOptions::default(), None) {
            Err(RccmError::EmptyCluster { cluster: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unpenalized_group_is_weighted_mean() {
        let r = resp(1, 2, &[1.0, 1.0]);
        let subs = vec![scalar(1.0), scalar(3.0)];
        let tp = TuningParams::new(0.0, 2.0, 0.0, 1);
        let g = update_group_precisions(&r, &subs, &tp, &SolverOptions::default(), None).unwrap();
        assert_abs_diff_eq!(g[0].as_matrix()[(0, 0)], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn hard_assignment_ties_go_low() {
        let state = ModelState {
            subject_precisions: vec![],
            group_precisions: vec![],
            weights: MixtureWeights(vec![0.5, 0.5]),
            responsibilities: resp(2, 3, &[0.9, 0.5, 0.0, 0.1, 0.5, 1.0]),
            iteration: 0,
            max_entry_change: 0.0,
            converged: true,
        };
        assert_eq!(hard_assignments(&state), vec![0, 0, 1]);
    }
}
