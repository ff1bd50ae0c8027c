use nalgebra::{DMatrix, DVector};

use super::{lasso_kkt_residual, SolverOptions};
use crate::error::{RccmError, Result};
use crate::linalg::{self, inverse_spd, off_diagonal_l1, soft_threshold, PrecisionMatrix, SymMatrix};

const INNER_MAX_SWEEPS: usize = 10_000;

/// tr(S Omega) - log|Omega| + lambda * sum_{i != j} |omega_ij|.
pub fn glasso_objective(s: &SymMatrix, lambda: f64, omega: &PrecisionMatrix) -> f64 {
    linalg::trace_product(s.as_matrix(), omega.as_matrix()) - omega.log_det()
        + lambda * off_diagonal_l1(omega.as_matrix())
}

/// Max-norm violation of the optimality conditions S - Omega^{-1} + lambda * Gamma = 0.
pub fn glasso_kkt_residual(s: &SymMatrix, lambda: f64, omega: &PrecisionMatrix) -> f64 {
    let grad = s.as_matrix() - omega.inverse();
    lasso_kkt_residual(&grad, omega.as_matrix(), lambda)
}

/// Graphical lasso by block coordinate descent over columns of the covariance
/// iterate `W`. The diagonal of `W` stays pinned at `S_ii` because only
/// off-diagonal entries are penalized.
pub fn glasso_fit(s: &SymMatrix, lambda: f64, opts: &SolverOptions) -> Result<PrecisionMatrix> {
    opts.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(RccmError::invalid(format!("glasso penalty must be nonnegative, got {lambda}")));
    }
    let p = s.dim();
    let sm = s.as_matrix();
    if p == 0 {
        return Err(RccmError::invalid("glasso on an empty matrix"));
    }
    if (0..p).any(|i| sm[(i, i)] <= 0.0) {
        return Err(RccmError::invalid("glasso input needs a strictly positive diagonal"));
    }
    if let Some(init) = &opts.initial_iterate {
        if init.dim() != p {
            return Err(RccmError::invalid("warm start dimension does not match input"));
        }
    }

    if lambda == 0.0 {
        // The unpenalized problem is solved exactly by the inverse.
        let inv = inverse_spd(sm).map_err(|_| {
            RccmError::invalid("glasso with lambda = 0 requires a positive definite input")
        })?;
        return PrecisionMatrix::new(inv);
    }
    if p == 1 {
        return PrecisionMatrix::new(DMatrix::from_element(1, 1, 1.0 / sm[(0, 0)]));
    }

    let (mut w, mut beta) = initial_state(sm, opts.initial_iterate.as_ref());
    let mut last = DMatrix::zeros(p, p);
    let mut residual = f64::INFINITY;
    let inner_tol = (opts.tolerance * 1e-3).max(1e-14);

    for _ in 0..opts.max_iterations {
        for j in 0..p {
            sweep_column(sm, &mut w, &mut beta, j, lambda, inner_tol);
        }
        let omega = assemble_precision(sm, &w, &beta);
        if let Ok(pm) = PrecisionMatrix::new(omega.clone()) {
            residual = glasso_kkt_residual(s, lambda, &pm);
            if residual < opts.tolerance {
                return Ok(pm);
            }
        }
        last = omega;
    }
    Err(RccmError::Convergence {
        solver: "glasso",
        iterations: opts.max_iterations,
        residual,
        last: Box::new(last),
    })
}

/// Covariance iterate and per-column regression coefficients. `beta` column j
/// holds the p-1 coefficients for variable j (others in index order).
fn initial_state(s: &DMatrix<f64>, warm: Option<&PrecisionMatrix>) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = s.nrows();
    if let Some(init) = warm {
        let mut w = init.inverse();
        for i in 0..p {
            w[(i, i)] = s[(i, i)];
        }
        if linalg::cholesky(&w).is_some() {
            let om = init.as_matrix();
            let mut beta = DMatrix::zeros(p - 1, p);
            for j in 0..p {
                for (r, i) in (0..p).filter(|&i| i != j).enumerate() {
                    beta[(r, j)] = -om[(i, j)] / om[(j, j)];
                }
            }
            return (w, beta);
        }
    }
    let w = if linalg::cholesky(s).is_some() {
        s.clone()
    } else {
        DMatrix::from_diagonal(&s.diagonal())
    };
    (w, DMatrix::zeros(p - 1, p))
}

/// Solve the column-j lasso  min 1/2 b'W11 b - s12'b + lambda |b|_1  by
/// cyclic coordinate descent, then write W11 b back into row/column j.
fn sweep_column(
    s: &DMatrix<f64>,
    w: &mut DMatrix<f64>,
    beta: &mut DMatrix<f64>,
    j: usize,
    lambda: f64,
    inner_tol: f64,
) {
    let p = s.nrows();
    let idx: Vec<usize> = (0..p).filter(|&i| i != j).collect();
    let m = idx.len();
    let w11 = DMatrix::from_fn(m, m, |a, b| w[(idx[a], idx[b])]);
    let s12 = DVector::from_fn(m, |a, _| s[(idx[a], j)]);
    let mut b = beta.column(j).clone_owned();
    // r = s12 - W11 b
    let mut r = &s12 - &w11 * &b;

    for _ in 0..INNER_MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for a in 0..m {
            let waa = w11[(a, a)];
            let old = b[a];
            let new = soft_threshold(r[a] + waa * old, lambda) / waa;
            let delta = new - old;
            if delta != 0.0 {
                b[a] = new;
                r.axpy(-delta, &w11.column(a), 1.0);
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < inner_tol {
            break;
        }
    }

    let w12 = &w11 * &b;
    for (a, &i) in idx.iter().enumerate() {
        w[(i, j)] = w12[a];
        w[(j, i)] = w12[a];
    }
    beta.set_column(j, &b);
}

fn assemble_precision(s: &DMatrix<f64>, w: &DMatrix<f64>, beta: &DMatrix<f64>) -> DMatrix<f64> {
    let p = s.nrows();
    let mut omega = DMatrix::zeros(p, p);
    for j in 0..p {
        let idx = (0..p).filter(|&i| i != j);
        let mut w12_beta = 0.0;
        for (r, i) in idx.clone().enumerate() {
            w12_beta += w[(i, j)] * beta[(r, j)];
        }
        let diag = 1.0 / (s[(j, j)] - w12_beta);
        omega[(j, j)] = diag;
        for (r, i) in idx.enumerate() {
            omega[(i, j)] = -beta[(r, j)] * diag;
        }
    }
    // Each column comes from its own regression; reconcile the two halves.
    for j in 0..p {
        for i in (j + 1)..p {
            let (a, b) = (omega[(i, j)], omega[(j, i)]);
            let v = if a == 0.0 || b == 0.0 { 0.0 } else { 0.5 * (a + b) };
            omega[(i, j)] = v;
            omega[(j, i)] = v;
        }
    }
    omega
}
