use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{glasso_kmeans_baseline, ward_pooled_baseline};
use super::generate::{generate_group_networks, generate_truth_with_networks, sample_panel, GroupNetworks, NetworkTruth};
use super::metrics::{adjusted_rand_index, mean_edge_metrics, rand_index, EvaluationResult};
use super::{Magnitude, SimulationConfig};
use crate::error::{RccmError, Result};
use crate::linalg::PrecisionMatrix;
use crate::model::{rccm_fit_with_retries, FitOptions, TuningParams};
use crate::network::{edge_set, EdgeSet, DEFAULT_EDGE_THRESHOLD};
use crate::panel::TimeSeriesPanel;
use crate::rng::{derive_seed, streams, substream};
use crate::selection::{stars_select, Estimator, StarsConfig, TuningGrid};

const EMPTY_CLUSTER_RESTARTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Rccm,
    GlassoKmeans,
    WardPooled,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Rccm => "rccm",
            Method::GlassoKmeans => "glasso-kmeans",
            Method::WardPooled => "ward-pooled",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedTuning {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Per-subject penalty of the glasso / k-means baseline.
    pub glasso_lambda: f64,
    /// Penalty on the pooled covariance of the Ward baseline.
    pub pooled_lambda: f64,
}

/// Grids searched per replicate. The Ward baseline's pooled penalty reuses
/// the value selected for the per-subject glasso.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarsTuning {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub lambda3: Vec<f64>,
    pub glasso_lambda: Vec<f64>,
    #[serde(default)]
    pub stars: StarsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Selection {
    Fixed(FixedTuning),
    Stars(StarsTuning),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub simulation: SimulationConfig,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub selection: Selection,
    pub fit: FitOptions,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation; 0 with a single value.
    pub sd: f64,
}

impl MetricSummary {
    fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(MetricSummary { mean, sd })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub method: Method,
    pub groups: usize,
    pub magnitude: Magnitude,
    pub overlap: f64,
    pub successes: usize,
    pub failures: usize,
    pub rand_index: Option<MetricSummary>,
    pub adjusted_rand_index: Option<MetricSummary>,
    pub tpr_subject: Option<MetricSummary>,
    pub fpr_subject: Option<MetricSummary>,
    pub ppv_subject: Option<MetricSummary>,
    pub tpr_group: Option<MetricSummary>,
    pub fpr_group: Option<MetricSummary>,
    pub ppv_group: Option<MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    pub method: Method,
    pub result: Option<EvaluationResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchmarkRow>,
    pub records: Vec<ReplicateRecord>,
}

/// Assignment of estimated clusters to true groups maximizing the number of
/// co-labeled subjects: exhaustive for up to 8 clusters, greedy beyond.
fn match_groups(estimated: &[usize], truth: &[usize], est_groups: usize, true_groups: usize) -> Vec<Option<usize>> {
    let mut overlap = vec![vec![0usize; true_groups]; est_groups];
    for (&e, &t) in estimated.iter().zip(truth) {
        overlap[e][t] += 1;
    }
    let n = est_groups.max(true_groups);
    if n <= 8 {
        let mut best: Option<(usize, Vec<usize>)> = None;
        let mut perm: Vec<usize> = (0..n).collect();
        permute(&mut perm, 0, &mut |p| {
            let score: usize = (0..est_groups).filter(|&e| p[e] < true_groups).map(|e| overlap[e][p[e]]).sum();
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, p.to_vec()));
            }
        });
        let p = best.expect("at least one permutation").1;
        (0..est_groups).map(|e| (p[e] < true_groups).then_some(p[e])).collect()
    } else {
        let mut cells: Vec<(usize, usize, usize)> = (0..est_groups)
            .flat_map(|e| (0..true_groups).map(move |t| (e, t)))
            .map(|(e, t)| (overlap[e][t], e, t))
            .collect();
        cells.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut out = vec![None; est_groups];
        let mut used = vec![false; true_groups];
        for (_, e, t) in cells {
            if out[e].is_none() && !used[t] {
                out[e] = Some(t);
                used[t] = true;
            }
        }
        out
    }
}

fn permute(items: &mut [usize], start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}

/// Score a fit against the truth. Group-level metrics compare each estimated
/// cluster with the true group it is matched to.
pub fn evaluate(
    truth: &NetworkTruth,
    labels: &[usize],
    subject_precisions: &[PrecisionMatrix],
    group_precisions: Option<&[PrecisionMatrix]>,
) -> Result<EvaluationResult> {
    if subject_precisions.len() != truth.subject_networks.len() {
        return Err(RccmError::invalid("fit and truth disagree on the number of subjects"));
    }
    let p = truth.subject_precisions[0].dim();
    if subject_precisions.iter().any(|m| m.dim() != p) {
        return Err(RccmError::invalid("fit and truth disagree on the dimension"));
    }
    let est_subjects: Vec<EdgeSet> = subject_precisions.iter().map(|m| edge_set(m, DEFAULT_EDGE_THRESHOLD)).collect();
    let subject = mean_edge_metrics(truth.subject_networks.iter().zip(&est_subjects), p);

    let group = match group_precisions {
        Some(groups) => {
            if labels.iter().any(|&l| l >= groups.len()) {
                return Err(RccmError::invalid("label refers to a missing cluster estimate"));
            }
            let matching = match_groups(labels, &truth.labels, groups.len(), truth.group_networks.len());
            let est: Vec<EdgeSet> = groups.iter().map(|m| edge_set(m, DEFAULT_EDGE_THRESHOLD)).collect();
            let pairs: Vec<(&EdgeSet, &EdgeSet)> = matching
                .iter()
                .enumerate()
                .filter_map(|(e, t)| t.map(|t| (&truth.group_networks[t], &est[e])))
                .collect();
            (!pairs.is_empty()).then(|| mean_edge_metrics(pairs, p))
        }
        None => None,
    };

    Ok(EvaluationResult {
        rand_index: rand_index(&truth.labels, labels)?,
        adjusted_rand_index: adjusted_rand_index(&truth.labels, labels)?,
        tpr_subject: subject.tpr,
        fpr_subject: subject.fpr,
        ppv_subject: subject.ppv,
        tpr_group: group.map(|g| g.tpr),
        fpr_group: group.map(|g| g.fpr),
        ppv_group: group.map(|g| g.ppv),
    })
}

struct ReplicateTuning {
    rccm: TuningParams,
    glasso_lambda: f64,
    pooled_lambda: f64,
}

fn select_tuning(cfg: &BenchmarkConfig, panel: &TimeSeriesPanel, seed: u64) -> Result<ReplicateTuning> {
    let groups = cfg.simulation.groups;
    match &cfg.selection {
        Selection::Fixed(f) => Ok(ReplicateTuning {
            rccm: TuningParams::new(f.lambda1, f.lambda2, f.lambda3, groups),
            glasso_lambda: f.glasso_lambda,
            pooled_lambda: f.pooled_lambda,
        }),
        Selection::Stars(s) => {
            let stars = StarsConfig {
                seed: derive_seed(seed, streams::SUBSAMPLE, 0),
                ..s.stars
            };
            let needs_rccm = cfg.methods.contains(&Method::Rccm);
            let needs_glasso = cfg.methods.iter().any(|m| *m != Method::Rccm);
            let rccm = if needs_rccm {
                let grid = TuningGrid::from_axes(&s.lambda1, &s.lambda2, &s.lambda3, groups)?;
                stars_select(panel, &grid, &stars, &Estimator::Rccm(cfg.fit.clone()))?.selected_params()
            } else {
                TuningParams::new(0.0, 0.0, 0.0, groups)
            };
            let glasso_lambda = if needs_glasso {
                let grid = TuningGrid::from_axes(&s.glasso_lambda, &[0.0], &[0.0], groups)?;
                stars_select(panel, &grid, &stars, &Estimator::GlassoPerSubject(cfg.fit.solver.clone()))?
                    .selected_params()
                    .lambda1
            } else {
                0.0
            };
            Ok(ReplicateTuning {
                rccm,
                glasso_lambda,
                pooled_lambda: glasso_lambda,
            })
        }
    }
}

fn run_method(
    method: Method,
    cfg: &BenchmarkConfig,
    truth: &NetworkTruth,
    panel: &TimeSeriesPanel,
    tuning: &ReplicateTuning,
    seed: u64,
) -> Result<EvaluationResult> {
    let groups = cfg.simulation.groups;
    match method {
        Method::Rccm => {
            let opts = FitOptions { seed, ..cfg.fit.clone() };
            let state = rccm_fit_with_retries(panel, &tuning.rccm, &opts, EMPTY_CLUSTER_RESTARTS)?.state;
            evaluate(
                truth,
                &state.hard_assignments(),
                &state.subject_precisions,
                Some(&state.group_precisions),
            )
        }
        Method::GlassoKmeans => {
            let fit = glasso_kmeans_baseline(panel, tuning.glasso_lambda, groups, seed, &cfg.fit.solver)?;
            evaluate(truth, &fit.labels, &fit.subject_precisions, None)
        }
        Method::WardPooled => {
            let fit = ward_pooled_baseline(
                panel,
                cfg.fit.init_glasso_lambda,
                tuning.pooled_lambda,
                groups,
                &cfg.fit.solver,
            )?;
            evaluate(truth, &fit.labels, &fit.subject_precisions, fit.group_precisions.as_deref())
        }
    }
}

fn run_replicate(cfg: &BenchmarkConfig, networks: &GroupNetworks, replicate: usize) -> Vec<ReplicateRecord> {
    let seed = derive_seed(cfg.seed, streams::REPLICATE, replicate as u64);
    let record = |method, outcome: std::result::Result<EvaluationResult, String>| {
        let (result, error) = match outcome {
            Ok(r) => (Some(r), None),
            Err(e) => {
                log::warn!("replicate {replicate}, {method}: {e}");
                (None, Some(e))
            }
        };
        ReplicateRecord {
            replicate,
            seed,
            method,
            result,
            error,
        }
    };
    let setup = (|| {
        let truth = generate_truth_with_networks(&cfg.simulation, networks, &mut substream(seed, streams::SIMULATE, 0))?;
        let panel = sample_panel(&truth, cfg.simulation.n, seed)?;
        let tuning = select_tuning(cfg, &panel, seed)?;
        Ok::<_, RccmError>((truth, panel, tuning))
    })();
    match setup {
        Ok((truth, panel, tuning)) => cfg
            .methods
            .iter()
            .map(|&m| record(m, run_method(m, cfg, &truth, &panel, &tuning, seed).map_err(|e| e.to_string())))
            .collect(),
        Err(e) => cfg.methods.iter().map(|&m| record(m, Err(e.to_string()))).collect(),
    }
}

/// Simulate, fit and score `replicates` data sets. Group networks are drawn
/// once from the simulation seed and shared by all replicates; precision
/// values, labels and observations are redrawn per replicate. Failed fits
/// are kept as records with their error and counted per method.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkTable> {
    cfg.simulation.validate()?;
    cfg.fit.validate()?;
    if cfg.replicates == 0 {
        return Err(RccmError::invalid("need at least one replicate"));
    }
    if cfg.methods.is_empty() {
        return Err(RccmError::invalid("no methods requested"));
    }
    let networks = generate_group_networks(
        cfg.simulation.p,
        cfg.simulation.groups,
        cfg.simulation.overlap,
        &mut substream(cfg.simulation.seed, streams::NETWORKS, 0),
    )?;
    let records: Vec<ReplicateRecord> = (0..cfg.replicates)
        .into_par_iter()
        .flat_map_iter(|r| run_replicate(cfg, &networks, r))
        .collect();

    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let rows = methods
        .iter()
        .map(|&method| {
            let results: Vec<&EvaluationResult> = records
                .iter()
                .filter(|r| r.method == method)
                .filter_map(|r| r.result.as_ref())
                .collect();
            let summary = |f: &dyn Fn(&EvaluationResult) -> Option<f64>| {
                let values: Vec<f64> = results.iter().filter_map(|r| f(r)).collect();
                MetricSummary::from_values(&values)
            };
            BenchmarkRow {
                method,
                groups: cfg.simulation.groups,
                magnitude: cfg.simulation.magnitude,
                overlap: cfg.simulation.overlap,
                successes: results.len(),
                failures: records.iter().filter(|r| r.method == method && r.result.is_none()).count(),
                rand_index: summary(&|r| Some(r.rand_index)),
                adjusted_rand_index: summary(&|r| Some(r.adjusted_rand_index)),
                tpr_subject: summary(&|r| Some(r.tpr_subject)),
                fpr_subject: summary(&|r| Some(r.fpr_subject)),
                ppv_subject: summary(&|r| Some(r.ppv_subject)),
                tpr_group: summary(&|r| r.tpr_group),
                fpr_group: summary(&|r| r.fpr_group),
                ppv_group: summary(&|r| r.ppv_group),
            }
        })
        .collect();
    Ok(BenchmarkTable { rows, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matching_recovers_swapped_labels() {
        let m = match_groups(&[1, 1, 0, 0], &[0, 0, 1, 1], 2, 2);
        assert_eq!(m, vec![Some(1), Some(0)]);
    }

    #[test]
    fn matching_with_extra_cluster() {
        let m = match_groups(&[0, 0, 1, 2], &[0, 0, 1, 1], 3, 2);
        assert_eq!(m[0], Some(0));
        assert_eq!(m.iter().filter(|x| x.is_some()).count(), 2);
    }

    #[test]
    fn summary_uses_sample_sd() {
        let s = MetricSummary::from_values(&[1.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.sd - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(MetricSummary::from_values(&[5.0]).unwrap().sd, 0.0);
    }
}
