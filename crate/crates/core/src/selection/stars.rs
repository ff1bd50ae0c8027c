use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RccmError, Result};
use crate::linalg::PrecisionMatrix;
use crate::model::{rccm_fit_with_retries, FitOptions, TuningParams};
use crate::network::{edge_set, num_pairs, EdgeSet, DEFAULT_EDGE_THRESHOLD};
use crate::panel::TimeSeriesPanel;
use crate::rng::{derive_seed, streams, substream};
use crate::solvers::{accept_last_iterate, glasso_fit, SolverOptions};

const EMPTY_CLUSTER_RESTARTS: usize = 3;

/// Candidate tuning parameters, kept in lexicographic (lambda1, lambda2,
/// lambda3) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    candidates: Vec<TuningParams>,
}

impl TuningGrid {
    pub fn new(mut candidates: Vec<TuningParams>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(RccmError::invalid("tuning grid is empty"));
        }
        if candidates.iter().any(|c| c.groups != candidates[0].groups) {
            return Err(RccmError::invalid("all grid candidates must share the number of clusters"));
        }
        if candidates
            .iter()
            .any(|c| [c.lambda1, c.lambda2, c.lambda3].iter().any(|v| !v.is_finite()))
        {
            return Err(RccmError::invalid("tuning grid values must be finite"));
        }
        candidates.sort_by(|a, b| {
            a.lambda1
                .total_cmp(&b.lambda1)
                .then(a.lambda2.total_cmp(&b.lambda2))
                .then(a.lambda3.total_cmp(&b.lambda3))
        });
        candidates.dedup();
        Ok(TuningGrid { candidates })
    }

    /// Cartesian product of the three axes.
    pub fn from_axes(lambda1: &[f64], lambda2: &[f64], lambda3: &[f64], groups: usize) -> Result<Self> {
        let mut candidates = Vec::with_capacity(lambda1.len() * lambda2.len() * lambda3.len());
        for &l1 in lambda1 {
            for &l2 in lambda2 {
                for &l3 in lambda3 {
                    candidates.push(TuningParams::new(l1, l2, l3, groups));
                }
            }
        }
        Self::new(candidates)
    }

    pub fn candidates(&self) -> &[TuningParams] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarsConfig {
    #[serde(default = "default_subsamples")]
    pub num_subsamples: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_subsamples() -> usize {
    20
}

fn default_beta() -> f64 {
    0.05
}

impl Default for StarsConfig {
    fn default() -> Self {
        StarsConfig {
            num_subsamples: default_subsamples(),
            beta: default_beta(),
            seed: 0,
        }
    }
}

impl StarsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_subsamples < 2 {
            return Err(RccmError::invalid("stability selection needs at least two subsamples"));
        }
        if !(self.beta > 0.0 && self.beta <= 0.5) {
            return Err(RccmError::invalid("beta must lie in (0, 0.5]"));
        }
        Ok(())
    }
}

/// The estimator whose edge sets are being stabilized. For the per-subject
/// graphical lasso only `lambda1` of each candidate is used.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    Rccm(FitOptions),
    GlassoPerSubject(SolverOptions),
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Rccm(_) => "rccm",
            Estimator::GlassoPerSubject(_) => "glasso-per-subject",
        }
    }

    fn fit(&self, panel: &TimeSeriesPanel, tp: &TuningParams, warm: Option<&[PrecisionMatrix]>) -> Result<Vec<PrecisionMatrix>> {
        match self {
            Estimator::Rccm(opts) => {
                Ok(rccm_fit_with_retries(panel, tp, opts, EMPTY_CLUSTER_RESTARTS)?.state.subject_precisions)
            }
            Estimator::GlassoPerSubject(opts) => panel
                .subjects()
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    let o = opts.with_warm_start(warm.map(|w| w[k].clone()));
                    accept_last_iterate(glasso_fit(s.sample_cov(), tp.lambda1, &o))
                })
                .collect(),
        }
    }
}

/// floor(10 sqrt(n)) rows, or floor(0.75 n) when that exceeds n. The flag
/// reports the fallback.
pub fn subsample_size(n: usize) -> (usize, bool) {
    let b = (10.0 * (n as f64).sqrt() + 1e-9).floor() as usize;
    if b <= n {
        (b, false)
    } else {
        ((0.75 * n as f64).floor() as usize, true)
    }
}

/// Rows drawn without replacement per subject; subject k of subsample
/// `index` uses its own stream so selections do not depend on panel order
/// beyond k.
pub fn subsample_panel(panel: &TimeSeriesPanel, seed: u64, index: usize) -> Result<TimeSeriesPanel> {
    let base = derive_seed(seed, streams::SUBSAMPLE, index as u64);
    let rows: Vec<Vec<usize>> = panel
        .subjects()
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let (b, fallback) = subsample_size(s.n());
            if fallback {
                log::warn!("subject {k}: n = {} is below 100, subsampling {b} rows instead", s.n());
            }
            let mut rng = substream(base, streams::SUBSAMPLE, k as u64);
            index::sample(&mut rng, s.n(), b).into_vec()
        })
        .collect();
    panel.select_rows(&rows)
}

/// Mean over subjects of the average pairwise disagreement 2 theta (1 - theta)
/// between subsample edge sets, where theta is each pair's edge frequency.
///
/// `edge_sets[i][k]` is subject k's edge set on subsample i.
pub fn instability(edge_sets: &[Vec<EdgeSet>], p: usize) -> Result<f64> {
    let n = edge_sets.len();
    if n < 2 {
        return Err(RccmError::invalid("instability needs at least two subsamples"));
    }
    let k = edge_sets[0].len();
    if k == 0 || edge_sets.iter().any(|s| s.len() != k) {
        return Err(RccmError::invalid("every subsample must report the same subjects"));
    }
    if edge_sets.iter().flatten().flatten().any(|&(s, t)| s >= t || t >= p) {
        return Err(RccmError::invalid("edge outside the node range"));
    }
    let pairs = num_pairs(p) as f64;
    let mut total = 0.0;
    for subject in 0..k {
        let mut counts = std::collections::BTreeMap::<(usize, usize), usize>::new();
        for sub in edge_sets {
            for &e in &sub[subject] {
                *counts.entry(e).or_default() += 1;
            }
        }
        let xi: f64 = counts
            .values()
            .map(|&c| {
                let theta = c as f64 / n as f64;
                2.0 * theta * (1.0 - theta)
            })
            .sum();
        total += xi / pairs;
    }
    Ok(total / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateReport {
    pub params: TuningParams,
    /// `None` when a fit failed for this candidate.
    pub instability: Option<f64>,
    /// Fraction of absent subject-level edges on the full data, averaged
    /// over subjects.
    pub sparsity: Option<f64>,
    pub feasible: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub estimator: String,
    pub num_subsamples: usize,
    pub beta: f64,
    pub seed: u64,
    pub subsample_sizes: Vec<usize>,
    pub subsample_fallback: bool,
    pub candidates: Vec<CandidateReport>,
    pub selected: usize,
    pub any_feasible: bool,
}

impl StabilityReport {
    pub fn selected_params(&self) -> TuningParams {
        self.candidates[self.selected].params
    }
}

fn mean_sparsity(precisions: &[PrecisionMatrix], p: usize) -> f64 {
    let pairs = num_pairs(p) as f64;
    precisions
        .iter()
        .map(|m| 1.0 - edge_set(m, DEFAULT_EDGE_THRESHOLD).len() as f64 / pairs)
        .sum::<f64>()
        / precisions.len() as f64
}

/// Fit every grid candidate along the grid, warm-starting the per-subject
/// solver from the previous candidate.
fn fit_path(
    panel: &TimeSeriesPanel,
    grid: &TuningGrid,
    estimator: &Estimator,
) -> Vec<std::result::Result<Vec<PrecisionMatrix>, String>> {
    let mut out = Vec::with_capacity(grid.len());
    let mut warm: Option<Vec<PrecisionMatrix>> = None;
    for tp in grid.candidates() {
        match estimator.fit(panel, tp, warm.as_deref()) {
            Ok(fit) => {
                warm = Some(fit.clone());
                out.push(Ok(fit));
            }
            Err(e) => out.push(Err(e.to_string())),
        }
    }
    out
}

/// Stability selection over a tuning grid.
///
/// Every candidate is fitted on each of `num_subsamples` subsampled panels
/// and on the full panel. Candidates with instability at most `beta` are
/// feasible; among them the one with the smallest full-data sparsity wins,
/// ties going to the earlier grid entry. With no feasible candidate the least
/// unstable one is chosen and `any_feasible` is false.
pub fn stars_select(
    panel: &TimeSeriesPanel,
    grid: &TuningGrid,
    cfg: &StarsConfig,
    estimator: &Estimator,
) -> Result<StabilityReport> {
    cfg.validate()?;
    for tp in grid.candidates() {
        match estimator {
            Estimator::Rccm(_) => tp.validate_for(panel)?,
            Estimator::GlassoPerSubject(_) if !(tp.lambda1 >= 0.0) => {
                return Err(RccmError::invalid("glasso penalty must be nonnegative"));
            }
            Estimator::GlassoPerSubject(_) => {}
        }
    }
    let p = panel.p();
    let sizes: Vec<(usize, bool)> = panel.subjects().iter().map(|s| subsample_size(s.n())).collect();

    let subsample_fits: Vec<Vec<std::result::Result<Vec<PrecisionMatrix>, String>>> = (0..cfg.num_subsamples)
        .into_par_iter()
        .map(|i| match subsample_panel(panel, cfg.seed, i) {
            Ok(sub) => fit_path(&sub, grid, estimator),
            Err(e) => vec![Err(e.to_string()); grid.len()],
        })
        .collect();
    let full_fits = fit_path(panel, grid, estimator);

    let mut candidates = Vec::with_capacity(grid.len());
    for (c, tp) in grid.candidates().iter().enumerate() {
        let mut error = None;
        let mut edge_sets = Vec::with_capacity(cfg.num_subsamples);
        for fits in &subsample_fits {
            match &fits[c] {
                Ok(precs) => edge_sets.push(precs.iter().map(|m| edge_set(m, DEFAULT_EDGE_THRESHOLD)).collect()),
                Err(e) => {
                    error.get_or_insert_with(|| e.clone());
                }
            }
        }
        let sparsity = match &full_fits[c] {
            Ok(precs) => Some(mean_sparsity(precs, p)),
            Err(e) => {
                error.get_or_insert_with(|| e.clone());
                None
            }
        };
        let instability = if error.is_none() {
            Some(instability(&edge_sets, p)?)
        } else {
            None
        };
        candidates.push(CandidateReport {
            params: *tp,
            instability,
            sparsity,
            feasible: instability.is_some_and(|d| d <= cfg.beta),
            error,
        });
    }

    let feasible_pick = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.feasible)
        .min_by(|(i, a), (j, b)| {
            a.sparsity
                .expect("feasible candidates have a full fit")
                .total_cmp(&b.sparsity.expect("feasible candidates have a full fit"))
                .then(i.cmp(j))
        })
        .map(|(i, _)| i);
    let any_feasible = feasible_pick.is_some();
    let selected = match feasible_pick {
        Some(i) => i,
        None => candidates
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.instability.map(|d| (i, d)))
            .min_by(|(i, a), (j, b)| a.total_cmp(b).then(i.cmp(j)))
            .map(|(i, _)| i)
            .ok_or_else(|| {
                RccmError::invalid(format!(
                    "every grid candidate failed to fit: {}",
                    candidates[0].error.as_deref().unwrap_or("unknown error")
                ))
            })?,
    };
    if !any_feasible {
        log::warn!("no candidate reached instability <= {}; choosing the least unstable", cfg.beta);
    }

    Ok(StabilityReport {
        estimator: estimator.name().to_string(),
        num_subsamples: cfg.num_subsamples,
        beta: cfg.beta,
        seed: cfg.seed,
        subsample_sizes: sizes.iter().map(|s| s.0).collect(),
        subsample_fallback: sizes.iter().any(|s| s.1),
        candidates,
        selected,
        any_feasible,
    })
}
