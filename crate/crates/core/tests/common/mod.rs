#![allow(dead_code)]

use ksum_core::ksum::KsumInstance;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Daily-scale covariance with a common factor.
pub fn random_sigma(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n + 3, n, |_, _| rng.random_range(-0.01..0.01));
    let market = DVector::from_fn(n, |_, _| rng.random_range(0.002..0.01));
    a.tr_mul(&a) + &market * market.transpose() + DMatrix::from_fn(n, n, |i, j| if i == j { 1e-5 } else { 0.0 })
}

pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, k: usize) -> KsumInstance {
    let sigma = random_sigma(rng, n);
    let mu = DVector::from_fn(n, |_, _| rng.random_range(-0.0002..0.001));
    let s = DMatrix::from_fn(m, n, |_, _| rng.random_range(0.0..1.0));
    KsumInstance::new(sigma, mu, s, k).unwrap()
}

pub fn simplex_point(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let e = DVector::from_fn(n, |_, _| -rng.random_range(1e-12..1.0_f64).ln());
    let s = e.sum();
    e / s
}
