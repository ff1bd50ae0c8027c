use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::make_positive_definite;
use crate::error::{RccmError, Result};
use crate::linalg::{PrecisionMatrix, SymMatrix};
use crate::model::{initialize, rccm_fit_with_retries, FitOptions, TuningParams};
use crate::panel::TimeSeriesPanel;
use crate::rng::{derive_seed, streams, substream};
use crate::solvers::{accept_last_iterate, glasso_fit};
use crate::synthetic::sample_gaussian;

pub const DISPERSION_FLOOR: f64 = 1e-12;
const EMPTY_CLUSTER_RESTARTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapConfig {
    pub g_max: usize,
    #[serde(default = "default_references")]
    pub num_reference: usize,
    #[serde(default = "default_reference_lambda")]
    pub reference_glasso_lambda: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_references() -> usize {
    10
}

fn default_reference_lambda() -> f64 {
    1e-16
}

impl GapConfig {
    pub fn new(g_max: usize, seed: u64) -> Self {
        GapConfig {
            g_max,
            num_reference: default_references(),
            reference_glasso_lambda: default_reference_lambda(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.g_max < 2 {
            return Err(RccmError::invalid("g_max must be at least 2"));
        }
        if self.num_reference == 0 {
            return Err(RccmError::invalid("need at least one reference data set"));
        }
        if !(self.reference_glasso_lambda > 0.0) {
            return Err(RccmError::invalid("reference glasso penalty must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    /// 2..=g_max.
    pub g_values: Vec<usize>,
    pub observed: Vec<f64>,
    /// `reference[b][i]` is the dispersion of reference set b at `g_values[i]`.
    pub reference: Vec<Vec<f64>>,
    pub gap: Vec<f64>,
    pub sigma: Vec<f64>,
    pub selected: usize,
    /// False when no G below g_max satisfied the selection rule.
    pub condition_met: bool,
    /// Fits (observed and reference) whose EM emptied a cluster on every
    /// restart and were scored with their Ward initialization labels.
    pub ward_fallbacks: usize,
}

fn dispersion_sum(estimates: &[PrecisionMatrix], labels: &[usize], groups: usize) -> f64 {
    let p = estimates[0].dim();
    let mut total = 0.0;
    for g in 0..groups {
        let members: Vec<&PrecisionMatrix> = estimates.iter().zip(labels).filter(|(_, &l)| l == g).map(|(m, _)| m).collect();
        if members.is_empty() {
            continue;
        }
        let mut mean = DMatrix::zeros(p, p);
        for m in &members {
            mean += m.as_matrix();
        }
        mean /= members.len() as f64;
        total += members.iter().map(|m| (m.as_matrix() - &mean).norm_squared()).sum::<f64>();
    }
    total
}

fn dispersion_log(estimates: &[PrecisionMatrix], labels: &[usize], groups: usize) -> f64 {
    let p = estimates[0].dim() as f64;
    (dispersion_sum(estimates, labels, groups) / (groups as f64 * p * p))
        .max(DISPERSION_FLOOR)
        .ln()
}

/// log of the pooled within-cluster sum of squared entry deviations from the
/// cluster mean, divided by G p^2. Floored at 1e-12 before the log.
pub fn within_cluster_dispersion(estimates: &[PrecisionMatrix], labels: &[usize], groups: usize) -> Result<f64> {
    if estimates.is_empty() || estimates.len() != labels.len() {
        return Err(RccmError::invalid("need one label per estimate"));
    }
    if let Some(g) = (0..groups).find(|g| !labels.contains(g)) {
        return Err(RccmError::invalid(format!("cluster {g} has no members")));
    }
    if labels.iter().any(|&l| l >= groups) {
        return Err(RccmError::invalid("label outside 0..groups"));
    }
    Ok(dispersion_log(estimates, labels, groups))
}

/// A null panel: each subject's precision matrix has entries drawn
/// uniformly between the smallest and largest observed estimate of that
/// entry, shifted to be positive definite, and n_k Gaussian draws are taken
/// from it.
pub fn generate_reference_panel(
    panel: &TimeSeriesPanel,
    estimates: &[PrecisionMatrix],
    seed: u64,
) -> Result<TimeSeriesPanel> {
    if estimates.len() != panel.num_subjects() || estimates.iter().any(|m| m.dim() != panel.p()) {
        return Err(RccmError::invalid("need one p x p estimate per subject"));
    }
    let p = panel.p();
    let lo = DMatrix::from_fn(p, p, |i, j| estimates.iter().map(|m| m.as_matrix()[(i, j)]).fold(f64::INFINITY, f64::min));
    let hi = DMatrix::from_fn(p, p, |i, j| estimates.iter().map(|m| m.as_matrix()[(i, j)]).fold(f64::NEG_INFINITY, f64::max));
    let raw = panel
        .subjects()
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mut rng = substream(seed, streams::REFERENCE, k as u64);
            let mut m = DMatrix::zeros(p, p);
            for i in 0..p {
                for j in i..p {
                    let (a, b) = (lo[(i, j)], hi[(i, j)]);
                    let v = if a < b { rng.random_range(a..b) } else { a };
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            let precision = make_positive_definite(&SymMatrix::new(m)?);
            Ok(sample_gaussian(&precision, s.n(), &mut rng))
        })
        .collect::<Result<Vec<_>>>()?;
    TimeSeriesPanel::from_raw(raw, panel.roi_names().to_vec(), panel.is_standardized())
}

/// Smallest G with Gap(G) >= Gap(G + 1) - sigma(G + 1), over g_values in
/// order; the last value with `false` when the rule never holds.
pub fn gap_rule(g_values: &[usize], gap: &[f64], sigma: &[f64]) -> (usize, bool) {
    for i in 0..g_values.len().saturating_sub(1) {
        if gap[i] >= gap[i + 1] - sigma[i + 1] {
            return (g_values[i], true);
        }
    }
    (*g_values.last().expect("nonempty G range"), false)
}

fn glasso_estimates(panel: &TimeSeriesPanel, lambda: f64, opts: &FitOptions) -> Result<Vec<PrecisionMatrix>> {
    panel
        .subjects()
        .par_iter()
        .map(|s| accept_last_iterate(glasso_fit(s.sample_cov(), lambda, &opts.solver)))
        .collect()
}

/// Dispersion of the lightly penalized estimates under the RCCM hard
/// clustering at each G. Clusters left without hard members contribute no
/// deviations. When EM empties a cluster on every restart the Ward
/// initialization labels stand in; the second value counts those cases.
fn dispersion_curve(
    panel: &TimeSeriesPanel,
    tp_base: &TuningParams,
    estimates: &[PrecisionMatrix],
    g_max: usize,
    opts: &FitOptions,
) -> Result<(Vec<f64>, usize)> {
    let mut fallbacks = 0;
    let curve = (2..=g_max)
        .map(|g| {
            let tp = tp_base.with_groups(g);
            let labels = match rccm_fit_with_retries(panel, &tp, opts, EMPTY_CLUSTER_RESTARTS) {
                Ok(fit) => fit.state.hard_assignments(),
                Err(RccmError::EmptyCluster { .. }) => {
                    log::warn!("no stable {g}-cluster fit; scoring the Ward initialization");
                    fallbacks += 1;
                    initialize(panel, &tp, opts)?.hard_assignments()
                }
                Err(e) => return Err(e),
            };
            Ok(dispersion_log(estimates, &labels, g))
        })
        .collect::<Result<_>>()?;
    Ok((curve, fallbacks))
}

/// Gap statistic over G = 2..=g_max using `tp_base`'s penalties at every G.
pub fn gap_select(
    panel: &TimeSeriesPanel,
    tp_base: &TuningParams,
    cfg: &GapConfig,
    opts: &FitOptions,
) -> Result<GapReport> {
    cfg.validate()?;
    if cfg.g_max > panel.num_subjects() {
        return Err(RccmError::invalid("g_max exceeds the number of subjects"));
    }
    let estimates = glasso_estimates(panel, cfg.reference_glasso_lambda, opts)?;
    let (observed, mut ward_fallbacks) = dispersion_curve(panel, tp_base, &estimates, cfg.g_max, opts)?;
    let reference_curves: Vec<(Vec<f64>, usize)> = (0..cfg.num_reference)
        .into_par_iter()
        .map(|b| {
            let ref_panel =
                generate_reference_panel(panel, &estimates, derive_seed(cfg.seed, streams::REFERENCE, b as u64))?;
            let ref_estimates = glasso_estimates(&ref_panel, cfg.reference_glasso_lambda, opts)?;
            dispersion_curve(&ref_panel, tp_base, &ref_estimates, cfg.g_max, opts)
        })
        .collect::<Result<_>>()?;
    let mut reference = Vec::with_capacity(reference_curves.len());
    for (curve, fallbacks) in reference_curves {
        ward_fallbacks += fallbacks;
        reference.push(curve);
    }

    let g_values: Vec<usize> = (2..=cfg.g_max).collect();
    let b = cfg.num_reference as f64;
    let mut gap = Vec::with_capacity(g_values.len());
    let mut sigma = Vec::with_capacity(g_values.len());
    for i in 0..g_values.len() {
        let column: Vec<f64> = reference.iter().map(|r| r[i]).collect();
        let mean = column.iter().sum::<f64>() / b;
        let sd = (column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / b).sqrt();
        gap.push(mean - observed[i]);
        sigma.push(sd * (1.0 + 1.0 / b).sqrt());
    }
    let (selected, condition_met) = gap_rule(&g_values, &gap, &sigma);
    Ok(GapReport {
        g_values,
        observed,
        reference,
        gap,
        sigma,
        selected,
        condition_met,
        ward_fallbacks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> PrecisionMatrix {
        PrecisionMatrix::from_row_slice(1, &[v]).unwrap()
    }

    #[test]
    fn dispersion_scalar_example() {
        let v = within_cluster_dispersion(&[scalar(1.0), scalar(3.0)], &[0, 0], 1).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn dispersion_floor_and_relabeling() {
        let est = [scalar(1.0), scalar(1.0), scalar(2.0)];
        assert_eq!(within_cluster_dispersion(&est, &[0, 0, 1], 2).unwrap(), DISPERSION_FLOOR.ln());
        let est = [scalar(1.0), scalar(2.0), scalar(4.0), scalar(7.0)];
        assert_eq!(
            within_cluster_dispersion(&est, &[0, 0, 1, 1], 2).unwrap(),
            within_cluster_dispersion(&est, &[1, 1, 0, 0], 2).unwrap()
        );
        assert!(within_cluster_dispersion(&est, &[0, 0, 0, 0], 2).is_err());
    }

    #[test]
    fn rule_on_fabricated_curve() {
        assert_eq!(gap_rule(&[2, 3, 4], &[0.1, 0.5, 0.52], &[0.0, 0.01, 0.1]), (3, true));
        assert_eq!(gap_rule(&[2, 3, 4], &[0.0; 3], &[0.0; 3]), (2, true));
        assert_eq!(gap_rule(&[2, 3], &[0.0, 1.0], &[0.0, 0.1]), (3, false));
    }
}
