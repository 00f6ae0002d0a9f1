#![allow(dead_code)]

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Minimizer of `0.5 (x - v)^2 + eps |x|` by repeated grid refinement.
pub fn grid_prox_scalar(v: f64, eps: f64) -> f64 {
    let f = |x: f64| 0.5 * (x - v) * (x - v) + eps * x.abs();
    let (mut lo, mut hi) = (-v.abs() - 1.0, v.abs() + 1.0);
    let mut best = 0.0;
    for _ in 0..12 {
        let steps = 200;
        let h = (hi - lo) / steps as f64;
        let mut best_f = f64::INFINITY;
        for k in 0..=steps {
            let x = lo + h * k as f64;
            let fx = f(x);
            if fx < best_f {
                best_f = fx;
                best = x;
            }
        }
        lo = best - 2.0 * h;
        hi = best + 2.0 * h;
    }
    // The kink at zero is the minimizer whenever the grid lands next to it.
    if f(0.0) <= f(best) {
        0.0
    } else {
        best
    }
}

/// Central-difference gradient of a scalar function of a matrix.
pub fn fd_gradient(f: impl Fn(&DMatrix<f64>) -> f64, at: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(at.nrows(), at.ncols());
    let mut probe = at.clone();
    for idx in 0..at.len() {
        let orig = probe[idx];
        probe[idx] = orig + h;
        let up = f(&probe);
        probe[idx] = orig - h;
        let down = f(&probe);
        probe[idx] = orig;
        g[idx] = (up - down) / (2.0 * h);
    }
    g
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Random matrices with shapes up to `max_dim` and entries in `[-range, range]`.
pub fn matrix(max_dim: usize, range: f64) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(move |(r, c)| {
        prop::collection::vec(-range..range, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
    })
}

pub fn matrix_pair(
    max_dim: usize,
    range: f64,
) -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(move |(r, c)| {
        (
            prop::collection::vec(-range..range, r * c),
            prop::collection::vec(-range..range, r * c),
        )
            .prop_map(move |(a, b)| (DMatrix::from_vec(r, c, a), DMatrix::from_vec(r, c, b)))
    })
}
