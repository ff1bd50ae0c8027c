//! Synthetic hub-network benchmark: ground-truth generation, Gaussian panel
//! sampling, the two-step baselines, evaluation metrics and the replicate
//! harness.

mod baselines;
mod benchmark;
mod generate;
mod metrics;

pub use baselines::{glasso_kmeans_baseline, ward_pooled_baseline, BaselineFit};
pub use benchmark::{
    evaluate, run_benchmark, BenchmarkConfig, BenchmarkRow, BenchmarkTable, FixedTuning, Method, MetricSummary,
    Selection, StarsTuning,
};
pub use generate::{
    draw_group_precisions, generate_group_networks, generate_truth, generate_truth_with_networks, repair_precision,
    sample_gaussian, sample_panel, GroupNetworks, NetworkTruth,
};
pub use metrics::{adjusted_rand_index, edge_metrics, rand_index, EdgeMetrics, EvaluationResult};

pub use crate::cluster::{frobenius_distance_matrix, kmeans_vectorized, ward_cluster};

use serde::{Deserialize, Serialize};

use crate::error::{RccmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Magnitude {
    High,
    Low,
}

/// Low-magnitude truth is the high-magnitude construction with every
/// off-diagonal entry scaled by a third, so the nominal intervals below keep
/// their 3:1 ratio after the positive-definiteness repair.
impl Magnitude {
    /// Nominal support of |omega_ij| for generated edges; the sign is uniform.
    pub fn interval(self) -> (f64, f64) {
        match self {
            Magnitude::High => (0.5, 1.0),
            Magnitude::Low => (0.5 / 3.0, 1.0 / 3.0),
        }
    }

    pub fn scale(self) -> f64 {
        match self {
            Magnitude::High => 1.0,
            Magnitude::Low => 1.0 / 3.0,
        }
    }
}

impl std::fmt::Display for Magnitude {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Magnitude::High => "high",
            Magnitude::Low => "low",
        })
    }
}

fn default_perturbation() -> f64 {
    0.20
}

fn default_noise() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub groups: usize,
    pub subjects: usize,
    pub p: usize,
    pub n: usize,
    pub overlap: f64,
    pub magnitude: Magnitude,
    pub cluster_sizes: Vec<usize>,
    #[serde(default = "default_perturbation")]
    pub subject_perturbation_rate: f64,
    #[serde(default = "default_noise")]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

/// floor(rate * count), tolerant of binary rounding (0.29 * 100 is 28.999...).
pub(crate) fn floor_fraction(rate: f64, count: usize) -> usize {
    (rate * count as f64 + 1e-9).floor() as usize
}

pub fn hub_count(p: usize) -> usize {
    ((p as f64).sqrt() + 1e-9).floor() as usize
}

impl SimulationConfig {
    /// Cluster sizes proportional to `fractions`, rounded so they sum to
    /// `subjects` with every cluster nonempty.
    pub fn proportional_sizes(subjects: usize, fractions: &[f64]) -> Vec<usize> {
        let total: f64 = fractions.iter().sum();
        let mut sizes: Vec<usize> = fractions
            .iter()
            .map(|f| ((f / total) * subjects as f64).round().max(1.0) as usize)
            .collect();
        while sizes.iter().sum::<usize>() > subjects {
            let i = (0..sizes.len()).max_by_key(|&i| sizes[i]).expect("nonempty");
            sizes[i] -= 1;
        }
        while sizes.iter().sum::<usize>() < subjects {
            let i = (0..sizes.len()).min_by_key(|&i| sizes[i]).expect("nonempty");
            sizes[i] += 1;
        }
        sizes
    }

    pub fn edges_per_group(&self) -> usize {
        self.p - hub_count(self.p)
    }

    pub fn shared_edges(&self) -> usize {
        floor_fraction(self.overlap, self.edges_per_group())
    }

    pub fn toggles_per_subject(&self) -> usize {
        floor_fraction(self.subject_perturbation_rate, self.edges_per_group())
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 4 {
            return Err(RccmError::invalid("simulation needs p >= 4 (at least two hubs)"));
        }
        if self.groups == 0 || self.cluster_sizes.len() != self.groups {
            return Err(RccmError::invalid("cluster_sizes must list one size per group"));
        }
        if self.cluster_sizes.contains(&0) || self.cluster_sizes.iter().sum::<usize>() != self.subjects {
            return Err(RccmError::invalid("cluster sizes must be positive and sum to the number of subjects"));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(RccmError::invalid("overlap must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.subject_perturbation_rate) {
            return Err(RccmError::invalid("subject perturbation rate must lie in [0, 1]"));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(RccmError::invalid("noise sd must be nonnegative"));
        }
        if self.n < 2 {
            return Err(RccmError::invalid("need at least two observations per subject"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_for_p10() {
        let cfg = SimulationConfig {
            groups: 2,
            subjects: 4,
            p: 10,
            n: 50,
            overlap: 0.2,
            magnitude: Magnitude::High,
            cluster_sizes: vec![2, 2],
            subject_perturbation_rate: 0.2,
            noise_sd: 0.05,
            seed: 1,
        };
        assert_eq!(hub_count(10), 3);
        assert_eq!(cfg.edges_per_group(), 7);
        assert_eq!(cfg.shared_edges(), 1);
        assert_eq!(cfg.toggles_per_subject(), 1);
        assert_eq!(SimulationConfig { overlap: 0.8, ..cfg }.shared_edges(), 5);
    }

    #[test]
    fn proportional_sizes_sum() {
        assert_eq!(SimulationConfig::proportional_sizes(104, &[67.0, 37.0]), vec![67, 37]);
        assert_eq!(SimulationConfig::proportional_sizes(20, &[67.0, 37.0]), vec![13, 7]);
        assert_eq!(SimulationConfig::proportional_sizes(3, &[1.0, 1.0, 100.0]), vec![1, 1, 1]);
    }
}
