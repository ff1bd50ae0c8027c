//! Edge sets: the conditional-independence graph read off a precision matrix.

use std::collections::BTreeSet;

use crate::linalg::PrecisionMatrix;

/// Unordered node pairs stored as `(s, t)` with `s < t`.
pub type EdgeSet = BTreeSet<(usize, usize)>;

pub const DEFAULT_EDGE_THRESHOLD: f64 = 1e-8;

/// Pairs {s, t} with |omega_st| > threshold.
pub fn edge_set(precision: &PrecisionMatrix, threshold: f64) -> EdgeSet {
    let m = precision.as_matrix();
    let p = precision.dim();
    let mut edges = EdgeSet::new();
    for s in 0..p {
        for t in (s + 1)..p {
            if m[(s, t)].abs() > threshold {
                edges.insert((s, t));
            }
        }
    }
    edges
}

pub fn ordered_pair(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub fn num_pairs(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_no_edges() {
        assert!(edge_set(&PrecisionMatrix::identity(4), DEFAULT_EDGE_THRESHOLD).is_empty());
    }

    #[test]
    fn single_edge_detected() {
        let m = PrecisionMatrix::from_row_slice(3, &[1.0, 0.4, 0.0, 0.4, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(edge_set(&m, DEFAULT_EDGE_THRESHOLD), EdgeSet::from([(0, 1)]));
        assert!(edge_set(&m, 10.0).is_empty());
    }
}
