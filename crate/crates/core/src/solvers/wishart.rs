use std::f64::consts::{LN_2, PI};

use statrs::function::gamma::ln_gamma;

use crate::error::{RccmError, Result};
use crate::linalg::{self, PrecisionMatrix};

/// log Gamma_p(a) = p(p-1)/4 log(pi) + sum_{j=1..p} log Gamma(a + (1-j)/2).
pub fn log_multivariate_gamma(p: usize, a: f64) -> Result<f64> {
    if p == 0 {
        return Err(RccmError::Domain("multivariate gamma needs p >= 1".into()));
    }
    let pf = p as f64;
    if !(a > (pf - 1.0) / 2.0) {
        return Err(RccmError::Domain(format!(
            "multivariate gamma requires a > (p-1)/2 = {}, got {a}",
            (pf - 1.0) / 2.0
        )));
    }
    let mut total = pf * (pf - 1.0) / 4.0 * PI.ln();
    for j in 1..=p {
        total += ln_gamma(a + (1.0 - j as f64) / 2.0);
    }
    Ok(total)
}

/// Log-density of a Wishart matrix with `df` degrees of freedom and mean
/// `mean` (scale `mean / df`), evaluated at `omega`. Determinants go through
/// Cholesky factors so large `df` never overflows.
pub fn wishart_log_density(omega: &PrecisionMatrix, df: f64, mean: &PrecisionMatrix) -> Result<f64> {
    let p = omega.dim();
    if mean.dim() != p {
        return Err(RccmError::Domain(format!(
            "dimension mismatch: {} vs {}",
            p,
            mean.dim()
        )));
    }
    let pf = p as f64;
    if !(df > pf - 1.0) {
        return Err(RccmError::Domain(format!(
            "Wishart degrees of freedom must exceed p - 1 = {}, got {df}",
            pf - 1.0
        )));
    }
    let log_det_omega = omega.log_det();
    // log|mean / df| = log|mean| - p log df
    let log_det_scale = mean.log_det() - pf * df.ln();
    let trace = linalg::trace_product(&mean.inverse(), omega.as_matrix());
    Ok((df - pf - 1.0) / 2.0 * log_det_omega - df / 2.0 * trace - df * pf / 2.0 * LN_2 - df / 2.0 * log_det_scale
        - log_multivariate_gamma(p, df / 2.0)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scalar_gamma_cases() {
        assert_abs_diff_eq!(log_multivariate_gamma(1, 1.0).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(log_multivariate_gamma(1, 0.5).unwrap(), 0.5 * PI.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(log_multivariate_gamma(2, 2.0).unwrap(), 0.451_582_705_289_454_9, epsilon = 1e-10);
    }

    #[test]
    fn gamma_domain_error() {
        assert!(log_multivariate_gamma(3, 1.0).is_err());
        assert!(log_multivariate_gamma(3, 1.01).is_ok());
    }

    #[test]
    fn density_rejects_low_df_and_mismatch() {
        let i2 = PrecisionMatrix::identity(2);
        assert!(wishart_log_density(&i2, 1.0, &i2).is_err());
        assert!(wishart_log_density(&i2, 3.0, &PrecisionMatrix::identity(3)).is_err());
    }
}
