//! Tuning-parameter selection by subsample stability and cluster-count
//! selection by the gap statistic.

mod gap;
mod stars;

pub use gap::{
    gap_rule, gap_select, generate_reference_panel, within_cluster_dispersion, GapConfig, GapReport,
    DISPERSION_FLOOR,
};
pub use stars::{
    instability, stars_select, subsample_panel, subsample_size, CandidateReport, Estimator, StabilityReport,
    StarsConfig, TuningGrid,
};

use nalgebra::DMatrix;

use crate::linalg::{self, PrecisionMatrix, SymMatrix};

/// Smallest eigenvalue `make_positive_definite` guarantees.
pub const MIN_EIGENVALUE: f64 = 1e-3;

/// `m` itself when its smallest eigenvalue is at least 1e-3, otherwise
/// `m + (1e-3 - lambda_min) I`.
pub fn make_positive_definite(m: &SymMatrix) -> PrecisionMatrix {
    let a = m.as_matrix();
    let lambda_min = linalg::min_eigenvalue(a);
    let out = if lambda_min >= MIN_EIGENVALUE {
        a.clone()
    } else {
        a + DMatrix::identity(a.nrows(), a.ncols()) * (MIN_EIGENVALUE - lambda_min)
    };
    PrecisionMatrix::new(out).expect("shifted matrix is positive definite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_fixed() {
        let i = SymMatrix::identity(3);
        assert_eq!(make_positive_definite(&i).as_matrix(), i.as_matrix());
    }

    #[test]
    fn indefinite_diagonal_shift() {
        let m = SymMatrix::from_row_slice(2, &[1.0, 0.0, 0.0, -1.0]).unwrap();
        let out = make_positive_definite(&m);
        assert!((out.as_matrix()[(0, 0)] - 2.001).abs() < 1e-12);
        assert!((out.as_matrix()[(1, 1)] - 0.001).abs() < 1e-12);
        assert_eq!(out.as_matrix()[(0, 1)], 0.0);
    }
}
