use rccm::model::{FitOptions, ModelState, TuningParams};
use rccm::network::EdgeSet;
use rccm::synthetic::{NetworkTruth, SimulationConfig};
use rccm::PrecisionMatrix;
use serde::{Deserialize, Serialize};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A square matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixRecord {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl MatrixRecord {
    pub fn from_precision(m: &PrecisionMatrix) -> Self {
        MatrixRecord {
            dim: m.dim(),
            data: m.row_major(),
        }
    }

    pub fn to_precision(&self) -> anyhow::Result<PrecisionMatrix> {
        anyhow::ensure!(self.data.len() == self.dim * self.dim, "matrix data does not match dim {}", self.dim);
        Ok(PrecisionMatrix::from_row_slice(self.dim, &self.data)?)
    }
}

fn records(ms: &[PrecisionMatrix]) -> Vec<MatrixRecord> {
    ms.iter().map(MatrixRecord::from_precision).collect()
}

fn precisions(rs: &[MatrixRecord]) -> anyhow::Result<Vec<PrecisionMatrix>> {
    rs.iter().map(MatrixRecord::to_precision).collect()
}

/// EM settings that can appear in configuration files and artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSettings {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_iterations")]
    pub max_em_iterations: usize,
    #[serde(default = "default_init_lambda")]
    pub init_glasso_lambda: f64,
}

fn default_epsilon() -> f64 {
    FitOptions::default().epsilon
}

fn default_max_iterations() -> usize {
    FitOptions::default().max_em_iterations
}

fn default_init_lambda() -> f64 {
    FitOptions::default().init_glasso_lambda
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            epsilon: default_epsilon(),
            max_em_iterations: default_max_iterations(),
            init_glasso_lambda: default_init_lambda(),
        }
    }
}

impl FitSettings {
    pub fn options(&self, seed: u64) -> FitOptions {
        FitOptions {
            epsilon: self.epsilon,
            max_em_iterations: self.max_em_iterations,
            init_glasso_lambda: self.init_glasso_lambda,
            seed,
            ..FitOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
    pub max_entry_change: f64,
    /// Random restarts taken after a cluster emptied.
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArtifact {
    pub software_version: String,
    pub seed: u64,
    pub tuning: TuningParams,
    pub settings: FitSettings,
    pub standardized: bool,
    pub roi_names: Vec<String>,
    pub subject_files: Vec<String>,
    pub convergence: Convergence,
    pub weights: Vec<f64>,
    /// `responsibilities[g][k]`.
    pub responsibilities: Vec<Vec<f64>>,
    /// 0-based cluster index per subject.
    pub hard_assignments: Vec<usize>,
    pub group_precisions: Vec<MatrixRecord>,
    pub subject_precisions: Vec<MatrixRecord>,
}

impl FitArtifact {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        state: &ModelState,
        restarts: usize,
        tuning: TuningParams,
        settings: FitSettings,
        seed: u64,
        standardized: bool,
        roi_names: Vec<String>,
        subject_files: Vec<String>,
    ) -> Self {
        let resp = state.responsibilities.as_matrix();
        FitArtifact {
            software_version: VERSION.to_owned(),
            seed,
            tuning,
            settings,
            standardized,
            roi_names,
            subject_files,
            convergence: Convergence {
                converged: state.converged,
                iterations: state.iteration,
                max_entry_change: state.max_entry_change,
                restarts,
            },
            weights: state.weights.as_slice().to_vec(),
            responsibilities: resp.row_iter().map(|r| r.iter().copied().collect()).collect(),
            hard_assignments: state.hard_assignments(),
            group_precisions: records(&state.group_precisions),
            subject_precisions: records(&state.subject_precisions),
        }
    }

    pub fn subject_matrices(&self) -> anyhow::Result<Vec<PrecisionMatrix>> {
        precisions(&self.subject_precisions)
    }

    pub fn group_matrices(&self) -> anyhow::Result<Vec<PrecisionMatrix>> {
        precisions(&self.group_precisions)
    }
}

fn edge_list(edges: &EdgeSet) -> Vec<[usize; 2]> {
    edges.iter().map(|&(a, b)| [a, b]).collect()
}

fn edge_set(list: &[[usize; 2]]) -> anyhow::Result<EdgeSet> {
    list.iter()
        .map(|&[a, b]| {
            anyhow::ensure!(a < b, "edge [{a}, {b}] must list the smaller node first");
            Ok((a, b))
        })
        .collect()
}

/// Ground truth of a simulated panel. Node indices and labels are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFile {
    pub config: SimulationConfig,
    pub labels: Vec<usize>,
    pub shared_edges: Vec<[usize; 2]>,
    pub group_networks: Vec<Vec<[usize; 2]>>,
    pub subject_networks: Vec<Vec<[usize; 2]>>,
    pub group_precisions: Vec<MatrixRecord>,
    pub subject_precisions: Vec<MatrixRecord>,
}

impl TruthFile {
    pub fn new(config: SimulationConfig, truth: &NetworkTruth) -> Self {
        TruthFile {
            config,
            labels: truth.labels.clone(),
            shared_edges: edge_list(&truth.shared_edges),
            group_networks: truth.group_networks.iter().map(edge_list).collect(),
            subject_networks: truth.subject_networks.iter().map(edge_list).collect(),
            group_precisions: records(&truth.group_precisions),
            subject_precisions: records(&truth.subject_precisions),
        }
    }

    pub fn to_truth(&self) -> anyhow::Result<NetworkTruth> {
        Ok(NetworkTruth {
            group_networks: self.group_networks.iter().map(|l| edge_set(l)).collect::<anyhow::Result<_>>()?,
            shared_edges: edge_set(&self.shared_edges)?,
            subject_networks: self.subject_networks.iter().map(|l| edge_set(l)).collect::<anyhow::Result<_>>()?,
            group_precisions: precisions(&self.group_precisions)?,
            subject_precisions: precisions(&self.subject_precisions)?,
            labels: self.labels.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub software_version: String,
    pub seed: u64,
    pub subjects: usize,
    pub p: usize,
    pub n: usize,
    pub subject_files: Vec<String>,
    pub truth: String,
}
