//! Multi-subject observation panels.

use nalgebra::DMatrix;

use crate::error::{RccmError, Result};
use crate::linalg::SymMatrix;

/// One subject's observations (rows are time points) with the cached sample
/// covariance `S = Y'Y / n` of the centered data.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    data: DMatrix<f64>,
    sample_cov: SymMatrix,
}

impl ObservationMatrix {
    fn from_centered(data: DMatrix<f64>) -> Result<Self> {
        let n = data.nrows() as f64;
        let cov = data.transpose() * &data / n;
        let sample_cov = SymMatrix::new(cov)?;
        Ok(ObservationMatrix { data, sample_cov })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn sample_cov(&self) -> &SymMatrix {
        &self.sample_cov
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    subjects: Vec<ObservationMatrix>,
    p: usize,
    roi_names: Vec<String>,
    standardized: bool,
}

fn default_roi_names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("V{i}")).collect()
}

/// Center every column; optionally scale to unit sample standard deviation
/// (n - 1 denominator).
fn center_and_scale(mut m: DMatrix<f64>, standardize: bool, subject: usize) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    for j in 0..m.ncols() {
        let mut col = m.column_mut(j);
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
        if standardize {
            let ss: f64 = col.iter().map(|v| v * v).sum();
            let sd = (ss / (n as f64 - 1.0)).sqrt();
            if !(sd > 1e-12 * (1.0 + mean.abs())) {
                return Err(RccmError::DegenerateColumn { subject, column: j });
            }
            col /= sd;
        }
    }
    Ok(m)
}

/// Build a panel from raw per-subject matrices (rows = time points, columns =
/// variables). Columns are always centered; `standardize` also scales them.
pub fn build_panel(raw: Vec<DMatrix<f64>>, standardize: bool) -> Result<TimeSeriesPanel> {
    let p = raw
        .first()
        .map(|m| m.ncols())
        .ok_or_else(|| RccmError::invalid("panel needs at least one subject"))?;
    TimeSeriesPanel::from_raw(raw, default_roi_names(p), standardize)
}

impl TimeSeriesPanel {
    pub fn from_raw(raw: Vec<DMatrix<f64>>, roi_names: Vec<String>, standardize: bool) -> Result<Self> {
        let p = roi_names.len();
        if p == 0 {
            return Err(RccmError::invalid("panel needs at least one variable"));
        }
        let mut subjects = Vec::with_capacity(raw.len());
        for (k, m) in raw.into_iter().enumerate() {
            if m.ncols() != p {
                return Err(RccmError::invalid(format!(
                    "subject {k} has {} columns, expected {p}",
                    m.ncols()
                )));
            }
            if m.nrows() < 2 {
                return Err(RccmError::invalid(format!("subject {k} needs at least 2 observations")));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(RccmError::invalid(format!("subject {k} has non-finite values")));
            }
            subjects.push(ObservationMatrix::from_centered(center_and_scale(m, standardize, k)?)?);
        }
        if subjects.is_empty() {
            return Err(RccmError::invalid("panel needs at least one subject"));
        }
        Ok(TimeSeriesPanel {
            subjects,
            p,
            roi_names,
            standardized: standardize,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn num_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn subjects(&self) -> &[ObservationMatrix] {
        &self.subjects
    }

    pub fn subject(&self, k: usize) -> &ObservationMatrix {
        &self.subjects[k]
    }

    pub fn roi_names(&self) -> &[String] {
        &self.roi_names
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn sample_covs(&self) -> Vec<&SymMatrix> {
        self.subjects.iter().map(|s| s.sample_cov()).collect()
    }

    /// A new panel from selected rows of each subject, re-centered and
    /// re-scaled the same way as this one.
    pub fn select_rows(&self, rows: &[Vec<usize>]) -> Result<TimeSeriesPanel> {
        if rows.len() != self.subjects.len() {
            return Err(RccmError::invalid("row selection must cover every subject"));
        }
        let raw = self
            .subjects
            .iter()
            .zip(rows)
            .map(|(s, r)| s.data.select_rows(r.iter()))
            .collect();
        TimeSeriesPanel::from_raw(raw, self.roi_names.clone(), self.standardized)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn centers_without_scaling() {
        let panel = build_panel(vec![DMatrix::from_row_slice(2, 1, &[1.0, 3.0])], false).unwrap();
        assert_eq!(panel.subject(0).data().as_slice(), &[-1.0, 1.0]);
        assert_abs_diff_eq!(panel.subject(0).sample_cov().as_matrix()[(0, 0)], 1.0);
    }

    #[test]
    fn standardizes_with_sample_sd() {
        let panel = build_panel(vec![DMatrix::from_row_slice(2, 1, &[1.0, 3.0])], true).unwrap();
        let d = panel.subject(0).data();
        assert_abs_diff_eq!(d[0], -std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(panel.subject(0).sample_cov().as_matrix()[(0, 0)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn already_centered_data_unchanged() {
        let y = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.0, 1.0, -1.0, 1.0]);
        let panel = build_panel(vec![y.clone()], false).unwrap();
        assert_eq!(panel.subject(0).data(), &y);
        let s = y.transpose() * &y / 3.0;
        assert_abs_diff_eq!(panel.subject(0).sample_cov().as_matrix(), &s, epsilon = 1e-12);
    }

    #[test]
    fn constant_column_is_degenerate() {
        let y = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        match build_panel(vec![y.clone(), y], true) {
            Err(RccmError::DegenerateColumn { subject: 0, column: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mismatched_columns_rejected() {
        let a = DMatrix::zeros(3, 2);
        let b = DMatrix::zeros(3, 3);
        assert!(matches!(build_panel(vec![a, b], false), Err(RccmError::InvalidInput(_))));
    }
}
