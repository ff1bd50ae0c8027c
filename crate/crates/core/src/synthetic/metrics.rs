use serde::{Deserialize, Serialize};

use crate::error::{RccmError, Result};
use crate::network::{num_pairs, EdgeSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeMetrics {
    pub tpr: f64,
    pub fpr: f64,
    pub ppv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub rand_index: f64,
    pub adjusted_rand_index: f64,
    pub tpr_subject: f64,
    pub fpr_subject: f64,
    pub ppv_subject: f64,
    pub tpr_group: Option<f64>,
    pub fpr_group: Option<f64>,
    pub ppv_group: Option<f64>,
}

fn check_lengths(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(RccmError::invalid(format!(
            "label vectors differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(RccmError::invalid("need at least two labels to compare partitions"));
    }
    Ok(())
}

struct Contingency {
    cells: Vec<Vec<f64>>,
    rows: Vec<f64>,
    cols: Vec<f64>,
    n: f64,
}

fn contingency(a: &[usize], b: &[usize]) -> Contingency {
    let ra = a.iter().max().map_or(0, |m| m + 1);
    let rb = b.iter().max().map_or(0, |m| m + 1);
    let mut cells = vec![vec![0.0; rb]; ra];
    for (&x, &y) in a.iter().zip(b) {
        cells[x][y] += 1.0;
    }
    let rows = cells.iter().map(|r| r.iter().sum()).collect();
    let cols = (0..rb).map(|j| cells.iter().map(|r| r[j]).sum()).collect();
    Contingency {
        cells,
        rows,
        cols,
        n: a.len() as f64,
    }
}

fn choose2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Fraction of subject pairs on which the two partitions agree (both
/// together or both apart).
pub fn rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    check_lengths(a, b)?;
    let t = contingency(a, b);
    let total = choose2(t.n);
    let same_both: f64 = t.cells.iter().flatten().map(|&c| choose2(c)).sum();
    let same_a: f64 = t.rows.iter().map(|&c| choose2(c)).sum();
    let same_b: f64 = t.cols.iter().map(|&c| choose2(c)).sum();
    let disagreements = same_a + same_b - 2.0 * same_both;
    Ok((total - disagreements) / total)
}

/// Hubert-Arabie adjusted Rand index. When both partitions are trivial in
/// the same way (the chance correction has zero range) the index is 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    check_lengths(a, b)?;
    let t = contingency(a, b);
    let index: f64 = t.cells.iter().flatten().map(|&c| choose2(c)).sum();
    let sa: f64 = t.rows.iter().map(|&c| choose2(c)).sum();
    let sb: f64 = t.cols.iter().map(|&c| choose2(c)).sum();
    let expected = sa * sb / choose2(t.n);
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Recall, false-alarm rate over absent pairs, and precision. An empty
/// estimate has precision 1 if the truth is empty too and 0 otherwise; an
/// empty truth has recall 1.
pub fn edge_metrics(truth: &EdgeSet, estimate: &EdgeSet, p: usize) -> EdgeMetrics {
    let hits = truth.intersection(estimate).count() as f64;
    let false_alarms = estimate.len() as f64 - hits;
    let absent = num_pairs(p) as f64 - truth.len() as f64;
    let tpr = if truth.is_empty() { 1.0 } else { hits / truth.len() as f64 };
    let fpr = if absent > 0.0 { false_alarms / absent } else { 0.0 };
    let ppv = match (estimate.is_empty(), truth.is_empty()) {
        (true, true) => 1.0,
        (true, false) => 0.0,
        _ => hits / estimate.len() as f64,
    };
    EdgeMetrics { tpr, fpr, ppv }
}

/// Average of per-network metrics over paired (truth, estimate) lists.
pub(crate) fn mean_edge_metrics<'a, I>(pairs: I, p: usize) -> EdgeMetrics
where
    I: IntoIterator<Item = (&'a EdgeSet, &'a EdgeSet)>,
{
    let mut sum = EdgeMetrics {
        tpr: 0.0,
        fpr: 0.0,
        ppv: 0.0,
    };
    let mut count = 0.0;
    for (t, e) in pairs {
        let m = edge_metrics(t, e, p);
        sum.tpr += m.tpr;
        sum.fpr += m.fpr;
        sum.ppv += m.ppv;
        count += 1.0;
    }
    EdgeMetrics {
        tpr: sum.tpr / count,
        fpr: sum.fpr / count,
        ppv: sum.ppv / count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_partitions() {
        let a = [0, 0, 1, 1, 2];
        assert_eq!(rand_index(&a, &a).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn three_subject_example() {
        assert!((rand_index(&[0, 0, 1], &[0, 1, 1]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ari_ignores_label_names() {
        let a = [0, 0, 1, 1, 2, 2];
        let b = [0, 1, 1, 1, 2, 0];
        let renamed = [2, 0, 0, 0, 1, 2];
        assert_eq!(
            adjusted_rand_index(&a, &b).unwrap(),
            adjusted_rand_index(&a, &renamed).unwrap()
        );
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(rand_index(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn edge_examples() {
        let t = EdgeSet::from([(0, 1), (0, 2)]);
        let e = EdgeSet::from([(0, 1), (1, 3)]);
        let m = edge_metrics(&t, &e, 4);
        assert_eq!((m.tpr, m.fpr, m.ppv), (0.5, 0.25, 0.5));
        assert_eq!(edge_metrics(&t, &t, 4), EdgeMetrics { tpr: 1.0, fpr: 0.0, ppv: 1.0 });
        let complement: EdgeSet = [(0, 3), (1, 2), (1, 3), (2, 3)].into();
        assert_eq!(edge_metrics(&t, &complement, 4), EdgeMetrics { tpr: 0.0, fpr: 1.0, ppv: 0.0 });
        assert_eq!(edge_metrics(&t, &EdgeSet::new(), 4).ppv, 0.0);
        assert_eq!(edge_metrics(&EdgeSet::new(), &EdgeSet::new(), 4).ppv, 1.0);
    }
}
