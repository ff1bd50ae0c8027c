#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rccm::SymMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sample covariance of `n` standard Gaussian draws in `p` dimensions, mixed
/// through a random loading so the off-diagonals are not all tiny.
pub fn random_sample_cov(p: usize, n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
    let load = DMatrix::from_fn(p, p, |i, j| {
        let z: f64 = rng.sample(StandardNormal);
        if i == j { 1.0 } else { 0.4 * z }
    });
    let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = z * load;
    SymMatrix::new(x.transpose() * &x / n as f64).unwrap()
}
