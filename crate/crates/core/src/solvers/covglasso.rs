use nalgebra::DMatrix;

use super::{lasso_kkt_residual, SolverOptions};
use crate::error::{RccmError, Result};
use crate::linalg::{self, inverse_spd, off_diagonal_l1, soft_threshold, PrecisionMatrix, SymMatrix};

const INNER_MAX_STEPS: usize = 200;
const MAX_BACKTRACKS: usize = 60;

/// tr(A X^{-1}) + log|X| + rho * sum_{i != j} |x_ij|.
pub fn covglasso_objective(a: &SymMatrix, rho: f64, x: &PrecisionMatrix) -> f64 {
    linalg::trace_product(a.as_matrix(), &x.inverse()) + x.log_det() + rho * off_diagonal_l1(x.as_matrix())
}

/// Max-norm violation of the optimality conditions of the covariance lasso,
/// X^{-1} - X^{-1} A X^{-1} + rho * Gamma = 0.
pub fn covglasso_kkt_residual(a: &SymMatrix, rho: f64, x: &PrecisionMatrix) -> f64 {
    let xinv = x.inverse();
    let grad = &xinv - &xinv * a.as_matrix() * &xinv;
    lasso_kkt_residual(&grad, x.as_matrix(), rho)
}

fn smooth_majorizer(a: &DMatrix<f64>, anchor_inv: &DMatrix<f64>, y: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
    let yinv = inverse_spd(y).ok()?;
    let value = linalg::trace_product(a, &yinv) + linalg::trace_product(anchor_inv, y);
    let grad = anchor_inv - &yinv * a * &yinv;
    Some((value, grad))
}

fn prox(y: &DMatrix<f64>, threshold: f64) -> DMatrix<f64> {
    let p = y.nrows();
    DMatrix::from_fn(p, p, |i, j| if i == j { y[(i, j)] } else { soft_threshold(y[(i, j)], threshold) })
}

/// Covariance graphical lasso by majorize-minimize. At each outer step the
/// concave `log|X|` is replaced by its tangent at the current iterate, and the
/// convex surrogate tr(A X^{-1}) + tr(X_t^{-1} X) + rho |X|_1 is decreased by
/// proximal gradient steps with backtracking that keep the iterate positive
/// definite. The objective never increases from the starting point.
pub fn covglasso_fit(a: &SymMatrix, rho: f64, opts: &SolverOptions) -> Result<PrecisionMatrix> {
    opts.validate()?;
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(RccmError::invalid(format!("covglasso penalty must be nonnegative, got {rho}")));
    }
    let am = a.as_matrix();
    let p = a.dim();
    if !a.is_positive_definite() {
        return Err(RccmError::invalid("covglasso input must be positive definite"));
    }
    if rho == 0.0 {
        return PrecisionMatrix::new(am.clone());
    }
    let mut x = match &opts.initial_iterate {
        Some(init) if init.dim() == p => init.as_matrix().clone(),
        Some(_) => return Err(RccmError::invalid("warm start dimension does not match input")),
        None => am.clone(),
    };
    if p == 1 {
        return PrecisionMatrix::new(am.clone());
    }

    let mut residual = f64::INFINITY;
    let inner_tol = opts.tolerance * 1e-2;
    let mut step = 1.0 / am.amax().max(1.0);

    for _ in 0..opts.max_iterations {
        let anchor_inv = inverse_spd(&x)?;
        let mut y = x.clone();
        let (mut fy, mut grad) = smooth_majorizer(am, &anchor_inv, &y)
            .ok_or_else(|| RccmError::Numeric("covglasso iterate lost positive definiteness".into()))?;

        for _ in 0..INNER_MAX_STEPS {
            let mut accepted = None;
            let mut t = step;
            for _ in 0..MAX_BACKTRACKS {
                let candidate = prox(&(&y - &grad * t), t * rho);
                if let Some((fc, gc)) = smooth_majorizer(am, &anchor_inv, &candidate) {
                    let diff = &candidate - &y;
                    let bound = fy + linalg::trace_product(&grad, &diff) + diff.norm_squared() / (2.0 * t);
                    if fc <= bound + 1e-15 * fy.abs().max(1.0) {
                        accepted = Some((candidate, fc, gc, t));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((candidate, fc, gc, t)) = accepted else { break };
            let change = linalg::max_abs_diff(&candidate, &y);
            y = candidate;
            fy = fc;
            grad = gc;
            // Let the step grow back after a run of accepted steps.
            step = (t * 1.25).min(1e3);
            if change < inner_tol {
                break;
            }
        }
        linalg::symmetrize(&mut y);
        x = y;

        // Stationarity is measured on the original objective, not the surrogate.
        let pm = PrecisionMatrix::new(x.clone())?;
        residual = covglasso_kkt_residual(a, rho, &pm);
        if residual < opts.tolerance {
            return Ok(pm);
        }
    }
    Err(RccmError::Convergence {
        solver: "covglasso",
        iterations: opts.max_iterations,
        residual,
        last: Box::new(x),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unpenalized_returns_input() {
        let a = SymMatrix::from_row_slice(2, &[2.0, 0.3, 0.3, 1.5]).unwrap();
        let x = covglasso_fit(&a, 0.0, &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(x.as_matrix(), a.as_matrix(), epsilon = 1e-14);
    }

    #[test]
    fn diagonal_input_stays_diagonal() {
        let a = SymMatrix::from_row_slice(2, &[2.0, 0.0, 0.0, 3.0]).unwrap();
        let x = covglasso_fit(&a, 0.1, &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(x.as_matrix(), a.as_matrix(), epsilon = 1e-6);
    }

    #[test]
    fn shrinks_off_diagonal_and_descends() {
        let a = SymMatrix::from_row_slice(2, &[1.0, 0.4, 0.4, 1.0]).unwrap();
        let x = covglasso_fit(&a, 0.05, &SolverOptions::default()).unwrap();
        assert!(x.as_matrix()[(0, 1)].abs() < 0.4);
        let start = PrecisionMatrix::new(a.as_matrix().clone()).unwrap();
        assert!(covglasso_objective(&a, 0.05, &x) < covglasso_objective(&a, 0.05, &start));
        assert!(covglasso_kkt_residual(&a, 0.05, &x) < 1e-6);
    }

    #[test]
    fn indefinite_input_rejected() {
        let a = SymMatrix::from_row_slice(2, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(
            covglasso_fit(&a, 0.1, &SolverOptions::default()),
            Err(RccmError::InvalidInput(_))
        ));
    }
}
