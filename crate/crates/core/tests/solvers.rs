mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rccm::solvers::{
    covglasso_fit, covglasso_objective, glasso_fit, glasso_kkt_residual, log_multivariate_gamma,
    wishart_log_density, SolverOptions,
};
use rccm::{PrecisionMatrix, RccmError, SymMatrix};
use statrs::distribution::{ChiSquared, Continuous, Gamma};
use statrs::function::gamma::ln_gamma;

fn tight() -> SolverOptions {
    SolverOptions {
        tolerance: 1e-9,
        max_iterations: 2000,
        ..SolverOptions::default()
    }
}

/// For p = 2 the covariance iterate keeps the diagonal of S and
/// soft-thresholds the off-diagonal; the precision is its inverse.
fn glasso_p2_oracle(s: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let c = s[(0, 1)];
    let w12 = c.signum() * (c.abs() - lambda).max(0.0);
    let w = DMatrix::from_row_slice(2, 2, &[s[(0, 0)], w12, w12, s[(1, 1)]]);
    w.try_inverse().unwrap()
}

#[test]
fn glasso_matches_two_by_two_oracle() {
    let mut rng = common::rng(11);
    for _ in 0..100 {
        let s = common::random_sample_cov(2, 30, &mut rng);
        let lambda = rng.random_range(0.0..0.8);
        let fit = glasso_fit(&s, lambda, &tight()).unwrap();
        let oracle = glasso_p2_oracle(s.as_matrix(), lambda);
        assert!((fit.as_matrix() - &oracle).amax() < 1e-6, "lambda {lambda}: {fit:?} vs {oracle}");
    }
}

#[test]
fn glasso_worked_examples() {
    let s = SymMatrix::from_row_slice(2, &[1.0, 0.5, 0.5, 1.0]).unwrap();
    let fit = glasso_fit(&s, 0.25, &tight()).unwrap();
    let expected = DMatrix::from_row_slice(2, 2, &[1.0, -0.25, -0.25, 1.0]) / 0.9375;
    assert!((fit.as_matrix() - expected).amax() < 1e-8);

    let s = SymMatrix::from_row_slice(2, &[1.0, 0.3, 0.3, 1.0]).unwrap();
    let fit = glasso_fit(&s, 0.5, &tight()).unwrap();
    assert!((fit.as_matrix() - DMatrix::identity(2, 2)).amax() < 1e-10);

    let fit = glasso_fit(&SymMatrix::identity(2), 0.0, &tight()).unwrap();
    assert!((fit.as_matrix() - DMatrix::identity(2, 2)).amax() < 1e-12);
}

#[test]
fn glasso_without_penalty_inverts() {
    let mut rng = common::rng(5);
    let s = common::random_sample_cov(6, 40, &mut rng);
    let fit = glasso_fit(&s, 0.0, &tight()).unwrap();
    let inv = s.as_matrix().clone().try_inverse().unwrap();
    assert!((fit.as_matrix() - inv).amax() < 1e-6);
}

#[test]
fn glasso_kkt_holds_at_p10() {
    let mut rng = common::rng(23);
    for _ in 0..50 {
        let s = common::random_sample_cov(10, 60, &mut rng);
        let lambda = rng.random_range(0.01..0.4);
        let fit = glasso_fit(&s, lambda, &SolverOptions::default()).unwrap();
        assert!(glasso_kkt_residual(&s, lambda, &fit) < 1e-5);
        assert!(rccm::linalg::min_eigenvalue(fit.as_matrix()) > 0.0);
    }
}

#[test]
fn glasso_rejects_asymmetric_input_and_reports_nonconvergence() {
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.1, 1.0]);
    assert!(SymMatrix::new(asym).is_err());

    let mut rng = common::rng(3);
    let s = common::random_sample_cov(10, 15, &mut rng);
    let opts = SolverOptions {
        max_iterations: 1,
        tolerance: 1e-14,
        ..SolverOptions::default()
    };
    match glasso_fit(&s, 0.05, &opts) {
        Err(RccmError::Convergence { residual, .. }) => assert!(residual > 0.0),
        other => panic!("expected a convergence error, got {other:?}"),
    }
}

/// Zoomed grid search over (x11, x12, x22) restricted to positive definite
/// matrices.
fn covglasso_grid_oracle(a: &SymMatrix, rho: f64) -> f64 {
    let m = a.as_matrix();
    let objective = |v: [f64; 3]| {
        let det = v[0] * v[2] - v[1] * v[1];
        if v[0] <= 0.0 || det <= 1e-12 {
            return f64::INFINITY;
        }
        let trace = (m[(0, 0)] * v[2] - 2.0 * m[(0, 1)] * v[1] + m[(1, 1)] * v[0]) / det;
        trace + det.ln() + 2.0 * rho * v[1].abs()
    };
    let mut centre = [m[(0, 0)], 0.0, m[(1, 1)]];
    let mut width = [m[(0, 0)], m[(0, 0)].max(m[(1, 1)]), m[(1, 1)]];
    let mut best = f64::INFINITY;
    let steps = 20;
    for _ in 0..40 {
        let mut arg = centre;
        for i in 0..=steps {
            for j in 0..=steps {
                for k in 0..=steps {
                    let offset = |w: f64, t: usize| w * (2.0 * t as f64 / steps as f64 - 1.0);
                    let mut v = [
                        centre[0] + offset(width[0], i),
                        centre[1] + offset(width[1], j),
                        centre[2] + offset(width[2], k),
                    ];
                    // Keep the exact-zero off-diagonal on the grid; the lasso kink sits there.
                    if j == steps / 2 {
                        v[1] = 0.0;
                    }
                    let f = objective(v);
                    if f < best {
                        best = f;
                        arg = v;
                    }
                }
            }
        }
        centre = arg;
        width.iter_mut().for_each(|w| *w *= 0.5);
    }
    best
}

#[test]
fn covglasso_matches_grid_oracle_and_descends() {
    let mut rng = common::rng(17);
    for _ in 0..20 {
        let a = common::random_sample_cov(2, 25, &mut rng);
        let rho = rng.random_range(0.0..0.5);
        let fit = covglasso_fit(&a, rho, &tight()).unwrap();
        let f = covglasso_objective(&a, rho, &fit);
        let oracle = covglasso_grid_oracle(&a, rho);
        assert!(f <= oracle + 1e-3, "solver {f} oracle {oracle}");

        let mut previous = covglasso_objective(&a, rho, &PrecisionMatrix::new(a.as_matrix().clone()).unwrap());
        for iters in 1..=8 {
            let opts = SolverOptions {
                max_iterations: iters,
                ..tight()
            };
            let x = match covglasso_fit(&a, rho, &opts) {
                Ok(x) => x,
                Err(RccmError::Convergence { last, .. }) => PrecisionMatrix::new(*last).unwrap(),
                Err(e) => panic!("{e}"),
            };
            let value = covglasso_objective(&a, rho, &x);
            assert!(value <= previous + 1e-12, "objective rose from {previous} to {value}");
            previous = value;
        }
    }
}

#[test]
fn covglasso_without_penalty_returns_input() {
    let a = SymMatrix::from_row_slice(2, &[2.0, 0.3, 0.3, 1.0]).unwrap();
    let fit = covglasso_fit(&a, 0.0, &tight()).unwrap();
    assert_eq!(fit.as_matrix(), a.as_matrix());
}

#[test]
fn wishart_scalar_closed_forms() {
    for &(x, df) in &[(0.7, 3.0), (2.5, 5.5), (12.0, 10.0), (0.05, 1.5)] {
        // Mean df gives unit scale: a chi-square with df degrees of freedom.
        let chi = ChiSquared::new(df).unwrap();
        let v = wishart_log_density(
            &PrecisionMatrix::from_row_slice(1, &[x]).unwrap(),
            df,
            &PrecisionMatrix::from_row_slice(1, &[df]).unwrap(),
        )
        .unwrap();
        assert!((v - chi.ln_pdf(x)).abs() < 1e-9);

        // Mean m gives a Gamma with shape df/2 and rate df/(2m).
        let m = 1.7;
        let gamma = Gamma::new(df / 2.0, df / (2.0 * m)).unwrap();
        let v = wishart_log_density(
            &PrecisionMatrix::from_row_slice(1, &[x]).unwrap(),
            df,
            &PrecisionMatrix::from_row_slice(1, &[m]).unwrap(),
        )
        .unwrap();
        assert!((v - gamma.ln_pdf(x)).abs() < 1e-9);
    }
}

#[test]
fn wishart_rejects_small_degrees_of_freedom() {
    let i = PrecisionMatrix::identity(3);
    assert!(wishart_log_density(&i, 2.0, &i).is_err());
}

#[test]
fn multivariate_gamma_recursion() {
    for p in 1..=4usize {
        for &a in &[2.0, 3.7, 10.25, 50.0] {
            let direct = log_multivariate_gamma(p, a).unwrap();
            // Gamma_p(a) = pi^{(p-1)/2} Gamma(a) Gamma_{p-1}(a - 1/2), Gamma_0 = 1.
            let mut recursed = 0.0;
            for q in 1..=p {
                let shift = (p - q) as f64 / 2.0;
                recursed += (q as f64 - 1.0) / 2.0 * std::f64::consts::PI.ln() + ln_gamma(a - shift);
            }
            assert!((direct - recursed).abs() < 1e-10, "p {p} a {a}");
        }
    }
    assert!((log_multivariate_gamma(1, 5.0).unwrap() - 24f64.ln()).abs() < 1e-12);
    assert!(log_multivariate_gamma(3, 0.9).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn glasso_output_is_a_valid_precision(seed in 0u64..10_000, lambda in 0.0f64..0.6, p in 2usize..7) {
        let mut rng = common::rng(seed);
        let s = common::random_sample_cov(p, 3 * p, &mut rng);
        let fit = glasso_fit(&s, lambda, &SolverOptions::default()).unwrap();
        let m = fit.as_matrix();
        prop_assert!(rccm::linalg::min_eigenvalue(fit.as_matrix()) > 0.0);
        for i in 0..p {
            for j in 0..p {
                prop_assert_eq!(m[(i, j)], m[(j, i)]);
            }
        }
    }

}
