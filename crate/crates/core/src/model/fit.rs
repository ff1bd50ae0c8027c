use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::{
    update_group_precisions, update_pi, update_responsibilities, update_subject_precisions, FitOptions,
    InitStrategy, MixtureWeights, ModelState, ResponsibilityMatrix, TuningParams,
};
use crate::cluster::{frobenius_distance_matrix, ward_cluster};
use crate::error::{RccmError, Result};
use crate::linalg::{self, PrecisionMatrix};
use crate::panel::TimeSeriesPanel;
use crate::rng::{streams, substream};
use crate::solvers::{accept_last_iterate, glasso_fit};

/// Everything produced by one pass of the EM loop, handed to observers.
#[derive(Debug)]
pub struct EmIteration<'a> {
    pub iteration: usize,
    /// Responsibilities the pass started from.
    pub previous_responsibilities: &'a ResponsibilityMatrix,
    pub previous_subjects: &'a [PrecisionMatrix],
    pub previous_groups: &'a [PrecisionMatrix],
    pub weights: &'a MixtureWeights,
    pub groups: &'a [PrecisionMatrix],
    /// Responsibilities recomputed after the cluster update.
    pub intermediate_responsibilities: &'a ResponsibilityMatrix,
    pub subjects: &'a [PrecisionMatrix],
    pub responsibilities: &'a ResponsibilityMatrix,
    pub max_entry_change: f64,
}

fn initial_labels(estimates: &[PrecisionMatrix], groups: usize, opts: &FitOptions) -> Result<Vec<usize>> {
    match opts.init {
        InitStrategy::Ward => ward_cluster(&frobenius_distance_matrix(estimates)?, groups),
        InitStrategy::Random { attempt } => {
            let k = estimates.len();
            let mut rng = substream(opts.seed, streams::INIT, attempt);
            let mut order: Vec<usize> = (0..k).collect();
            order.shuffle(&mut rng);
            let mut labels = vec![0; k];
            for (pos, &subject) in order.iter().enumerate() {
                labels[subject] = if pos < groups { pos } else { rng.random_range(0..groups) };
            }
            Ok(labels)
        }
    }
}

/// Per-subject graphical lasso estimates at the initialization penalty,
/// clustered into hard responsibilities; weights and cluster precisions come
/// from one pass of their updates.
pub fn initialize(panel: &TimeSeriesPanel, tp: &TuningParams, opts: &FitOptions) -> Result<ModelState> {
    opts.validate()?;
    tp.validate_for(panel)?;
    let k = panel.num_subjects();
    if tp.groups > k {
        return Err(RccmError::invalid(format!(
            "cannot form {} clusters from {k} subjects",
            tp.groups
        )));
    }
    let subjects: Vec<PrecisionMatrix> = panel
        .subjects()
        .par_iter()
        .map(|s| accept_last_iterate(glasso_fit(s.sample_cov(), opts.init_glasso_lambda, &opts.solver)))
        .collect::<Result<_>>()?;
    let labels = initial_labels(&subjects, tp.groups, opts)?;
    let responsibilities = ResponsibilityMatrix::one_hot(&labels, tp.groups)?;
    let weights = update_pi(&responsibilities);
    let groups = update_group_precisions(&responsibilities, &subjects, tp, &opts.solver, None)?;
    Ok(ModelState {
        subject_precisions: subjects,
        group_precisions: groups,
        weights,
        responsibilities,
        iteration: 0,
        max_entry_change: f64::INFINITY,
        converged: false,
    })
}

fn max_change(a: &[PrecisionMatrix], b: &[PrecisionMatrix]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| linalg::max_abs_diff(x.as_matrix(), y.as_matrix()))
        .fold(0.0, f64::max)
}

/// Run the EM loop from a given state until the largest entrywise change of
/// all precision matrices drops below `epsilon` or the iteration cap is hit.
/// Hitting the cap is not an error: the state comes back with
/// `converged = false`.
pub fn run_em<F>(
    panel: &TimeSeriesPanel,
    tp: &TuningParams,
    opts: &FitOptions,
    mut state: ModelState,
    mut observer: F,
) -> Result<ModelState>
where
    F: FnMut(&EmIteration<'_>),
{
    opts.validate()?;
    tp.validate_for(panel)?;
    let with_iteration = |iteration: usize| {
        move |e: RccmError| match e {
            RccmError::EmptyCluster { cluster, .. } => RccmError::EmptyCluster {
                cluster,
                iteration: Some(iteration),
            },
            other => other,
        }
    };

    for iteration in (state.iteration + 1)..=(state.iteration + opts.max_em_iterations) {
        let weights = update_pi(&state.responsibilities);
        let groups = update_group_precisions(
            &state.responsibilities,
            &state.subject_precisions,
            tp,
            &opts.solver,
            Some(&state.group_precisions),
        )
        .map_err(with_iteration(iteration))?;
        let intermediate = update_responsibilities(&state.subject_precisions, &groups, &weights, tp.lambda2)?;
        let subjects = update_subject_precisions(
            panel,
            &intermediate,
            &groups,
            tp,
            &opts.solver,
            Some(&state.subject_precisions),
        )?;
        let responsibilities = update_responsibilities(&subjects, &groups, &weights, tp.lambda2)?;
        let change = max_change(&subjects, &state.subject_precisions).max(max_change(&groups, &state.group_precisions));

        observer(&EmIteration {
            iteration,
            previous_responsibilities: &state.responsibilities,
            previous_subjects: &state.subject_precisions,
            previous_groups: &state.group_precisions,
            weights: &weights,
            groups: &groups,
            intermediate_responsibilities: &intermediate,
            subjects: &subjects,
            responsibilities: &responsibilities,
            max_entry_change: change,
        });

        state = ModelState {
            subject_precisions: subjects,
            group_precisions: groups,
            weights,
            responsibilities,
            iteration,
            max_entry_change: change,
            converged: change < opts.epsilon,
        };
        if state.converged {
            break;
        }
    }
    Ok(state)
}

/// Initialize and fit.
pub fn rccm_fit(panel: &TimeSeriesPanel, tp: &TuningParams, opts: &FitOptions) -> Result<ModelState> {
    let state = initialize(panel, tp, opts)?;
    run_em(panel, tp, opts, state, |_| {})
}

#[derive(Debug, Clone)]
pub struct RetryOutcome {
    pub state: ModelState,
    /// Number of restarts needed after the first attempt.
    pub restarts: usize,
}

/// Fit, and when a cluster empties out restart from a fresh random
/// initialization (up to `max_restarts` times). Other errors are returned
/// immediately.
pub fn rccm_fit_with_retries(
    panel: &TimeSeriesPanel,
    tp: &TuningParams,
    opts: &FitOptions,
    max_restarts: usize,
) -> Result<RetryOutcome> {
    let mut attempt_opts = opts.clone();
    let mut restarts = 0;
    loop {
        match rccm_fit(panel, tp, &attempt_opts) {
            Ok(state) => return Ok(RetryOutcome { state, restarts }),
            Err(e @ RccmError::EmptyCluster { .. }) => {
                if restarts >= max_restarts {
                    return Err(e);
                }
                log::warn!("{e}; restarting from a random initialization");
                restarts += 1;
                attempt_opts.init = InitStrategy::Random {
                    attempt: restarts as u64,
                };
            }
            Err(e) => return Err(e),
        }
    }
}
