//! Dense symmetric matrix newtypes and the handful of factorizations the
//! solvers need. Everything is `f64` and small (p is at most a few hundred),
//! so there is no sparse storage.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{RccmError, Result};

const SYMMETRY_TOL: f64 = 1e-10;

/// A finite symmetric matrix, e.g. a sample covariance or a weighted average
/// of precision matrices fed to a solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

/// A symmetric positive definite matrix with a symmetric zero pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionMatrix(DMatrix<f64>);

fn check_square_finite(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(RccmError::invalid(format!(
            "matrix must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(RccmError::invalid("matrix has non-finite entries"));
    }
    Ok(())
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let scale = m.amax().max(1.0);
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(RccmError::invalid(format!(
                    "matrix is not symmetric at ({i}, {j}): {} vs {}",
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// Average a matrix with its transpose in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

impl SymMatrix {
    pub fn new(mut m: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&m)?;
        check_symmetric(&m)?;
        symmetrize(&mut m);
        Ok(SymMatrix(m))
    }

    pub fn identity(p: usize) -> Self {
        SymMatrix(DMatrix::identity(p, p))
    }

    pub fn from_row_slice(p: usize, data: &[f64]) -> Result<Self> {
        if data.len() != p * p {
            return Err(RccmError::invalid("row slice length does not match p*p"));
        }
        Self::new(DMatrix::from_row_slice(p, p, data))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn is_positive_definite(&self) -> bool {
        self.0.clone().cholesky().is_some()
    }
}

impl PrecisionMatrix {
    pub fn new(mut m: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&m)?;
        check_symmetric(&m)?;
        symmetrize(&mut m);
        if m.clone().cholesky().is_none() {
            return Err(RccmError::invalid("matrix is not positive definite"));
        }
        Ok(PrecisionMatrix(m))
    }

    pub fn identity(p: usize) -> Self {
        PrecisionMatrix(DMatrix::identity(p, p))
    }

    pub fn from_row_slice(p: usize, data: &[f64]) -> Result<Self> {
        if data.len() != p * p {
            return Err(RccmError::invalid("row slice length does not match p*p"));
        }
        Self::new(DMatrix::from_row_slice(p, p, data))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_sym(&self) -> SymMatrix {
        SymMatrix(self.0.clone())
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        // Construction guarantees a Cholesky factor exists.
        inverse_spd(&self.0).expect("precision matrix is positive definite")
    }

    pub fn log_det(&self) -> f64 {
        log_det_spd(&self.0).expect("precision matrix is positive definite")
    }

    /// Entries in row-major order.
    pub fn row_major(&self) -> Vec<f64> {
        row_major(&self.0)
    }
}

impl AsRef<DMatrix<f64>> for SymMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl AsRef<DMatrix<f64>> for PrecisionMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

pub fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    m.clone().cholesky()
}

/// log|M| from a Cholesky factor; never forms the determinant itself.
pub fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = cholesky(m).ok_or_else(|| RccmError::Numeric("log-determinant of a matrix that is not positive definite".into()))?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

pub fn inverse_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = cholesky(m).ok_or_else(|| RccmError::Numeric("inverse of a matrix that is not positive definite".into()))?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Sum of absolute off-diagonal entries.
pub fn off_diagonal_l1(m: &DMatrix<f64>) -> f64 {
    let mut total = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j {
                total += m[(i, j)].abs();
            }
        }
    }
    total
}

/// tr(A B) for square matrices of equal size, without forming the product.
pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(&b.transpose()).sum()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(SymMatrix::new(m).is_err());
    }

    #[test]
    fn rejects_indefinite_precision() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(PrecisionMatrix::new(m).is_err());
    }

    #[test]
    fn log_det_matches_determinant() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let ld = log_det_spd(&m).unwrap();
        assert!((ld - m.determinant().ln()).abs() < 1e-12);
    }

    #[test]
    fn trace_product_matches_matmul() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 0.25]);
        assert!((trace_product(&a, &b) - (&a * &b).trace()).abs() < 1e-14);
    }
}
