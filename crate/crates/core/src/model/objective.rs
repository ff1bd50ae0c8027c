use super::{ModelState, TuningParams};
use crate::error::{RccmError, Result};
use crate::linalg::{self, off_diagonal_l1};
use crate::panel::TimeSeriesPanel;
use crate::solvers::wishart_log_density;

/// The penalized negative log-likelihood
///
/// sum_k [n_k tr(S_k Omega_k) - n_k log|Omega_k|]
///   - 2 sum_k log sum_g pi_g p_g(Omega_k; lambda2, Omega_0g)
///   + lambda1 sum_k |Omega_k|_1 + lambda3 sum_g |Omega_0g|_1
///
/// with the mixture term evaluated by log-sum-exp. Returns `+inf` when every
/// mixture component of some subject has zero weight or underflows.
pub fn penalized_objective(panel: &TimeSeriesPanel, state: &ModelState, tp: &TuningParams) -> Result<f64> {
    let k_subjects = panel.num_subjects();
    let weights = state.weights.as_slice();
    if state.subject_precisions.len() != k_subjects || state.group_precisions.len() != weights.len() {
        return Err(RccmError::invalid("state does not match the panel"));
    }
    let mut total = 0.0;
    for (k, om) in state.subject_precisions.iter().enumerate() {
        if om.dim() != panel.p() {
            return Err(RccmError::invalid(format!("subject {k} precision has the wrong dimension")));
        }
        let subject = panel.subject(k);
        let n = subject.n() as f64;
        total += n * (linalg::trace_product(subject.sample_cov().as_matrix(), om.as_matrix()) - om.log_det());

        let mut logs = Vec::with_capacity(weights.len());
        for (g, group) in state.group_precisions.iter().enumerate() {
            logs.push(weights[g].ln() + wishart_log_density(om, tp.lambda2, group)?);
        }
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Ok(f64::INFINITY);
        }
        let lse = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        total -= 2.0 * lse;
        total += tp.lambda1 * off_diagonal_l1(om.as_matrix());
    }
    for group in &state.group_precisions {
        total += tp.lambda3 * off_diagonal_l1(group.as_matrix());
    }
    Ok(total)
}
