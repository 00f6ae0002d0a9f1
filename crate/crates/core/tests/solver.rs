mod common;

use common::{fd_gradient, gaussian, grid_prox_scalar, max_abs, rng};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rbds_core::datagen::{gen_subspaces, SubspaceSpec};
use rbds_core::mask::{build_mask, offblock_energy, MaskA};
use rbds_core::prox::nuclear_norm;
use rbds_core::solver::{
    check_convergence, fit_rbds, fit_rbds_with, update_d, update_e, update_j, update_l, update_z,
    SolveOptions, SolverState,
};
use rbds_core::SolverConfig;

/// A solver state with every block filled with noise.
fn random_state(r: &mut ChaCha8Rng, d: usize, m: usize, n: usize) -> (SolverState, MaskA) {
    let mu = 10f64.powf(r.random_range(-2.0..1.0));
    let mut s = SolverState::new(gaussian(r, d, n), gaussian(r, d, m), mu).unwrap();
    s.z = gaussian(r, m, n);
    s.j = gaussian(r, m, n);
    s.l = gaussian(r, m, n);
    s.e = gaussian(r, d, n) * 0.1;
    s.y1 = gaussian(r, d, n);
    s.y2 = gaussian(r, m, n);
    s.y3 = gaussian(r, m, n);
    let atoms: Vec<usize> = (0..m).map(|i| 1 + i % 3).collect();
    let samples: Vec<usize> = (0..n).map(|i| 1 + i % 3).collect();
    (s, build_mask(&atoms, &samples).unwrap())
}

fn cfg_with(alpha: f64) -> SolverConfig {
    SolverConfig {
        alpha,
        beta: 0.3,
        lambda: 0.4,
        gamma: 0.7,
        ..SolverConfig::default()
    }
}

/// The Z subproblem with the block term in its surrogate form.
fn z_subproblem(s: &SolverState, z: &DMatrix<f64>, r: &DMatrix<f64>, alpha: f64) -> f64 {
    let mu = s.mu;
    0.5 * alpha * (z - r).norm_squared()
        + 0.5 * mu * (&s.x - &s.d * z - &s.e + &s.y1 / mu).norm_squared()
        + 0.5 * mu * (z - &s.j + &s.y2 / mu).norm_squared()
        + 0.5 * mu * (z - &s.l + &s.y3 / mu).norm_squared()
}

fn d_subproblem(s: &SolverState, d: &DMatrix<f64>, gamma: f64) -> f64 {
    let mu = s.mu;
    0.5 * gamma * d.norm_squared() + 0.5 * mu * (&s.x - d * &s.z - &s.e + &s.y1 / mu).norm_squared()
}

/// Conjugate gradient on the normal equations of the Z subproblem, treating
/// the operator `Z -> mu D^T D Z + (alpha + 2 mu) Z` matrix-free.
fn cg_z(s: &SolverState, r: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    let mu = s.mu;
    let dt = s.d.transpose();
    let apply = |z: &DMatrix<f64>| &dt * (&s.d * z) * mu + z * (alpha + 2.0 * mu);
    let b = &dt * (&s.x - &s.e) * mu
        + &dt * &s.y1
        + (&s.j * mu - &s.y2)
        + (&s.l * mu - &s.y3)
        + r * alpha;
    let mut z = DMatrix::zeros(s.z.nrows(), s.z.ncols());
    let mut res = &b - apply(&z);
    let mut p = res.clone();
    let mut rr = res.norm_squared();
    for _ in 0..10 * z.len() {
        if rr.sqrt() <= 1e-14 * b.norm() {
            break;
        }
        let ap = apply(&p);
        let step = rr / p.dot(&ap);
        z += &p * step;
        res -= &ap * step;
        let next = res.norm_squared();
        p = &res + &p * (next / rr);
        rr = next;
    }
    z
}

#[test]
fn update_j_beats_random_candidates() {
    let mut r = rng(21);
    for _ in 0..5 {
        let (s, _) = random_state(&mut r, 6, 5, 7);
        let cfg = cfg_with(1.0);
        let j = update_j(&s, &cfg).unwrap();
        let target = &s.z + &s.y2 / s.mu;
        let f =
            |c: &DMatrix<f64>| nuclear_norm(c).unwrap() / s.mu + 0.5 * (c - &target).norm_squared();
        let best = f(&j);
        for k in 0..1000 {
            let scale = 10f64.powi(-(k % 4));
            let cand = &j + gaussian(&mut r, 5, 7) * scale;
            assert!(best <= f(&cand) + 1e-10);
        }
    }
}

#[test]
fn update_j_vanishes_for_large_mu() {
    let mut r = rng(22);
    let mut s = SolverState::new(gaussian(&mut r, 4, 6), gaussian(&mut r, 4, 3), 1e8).unwrap();
    s.z = gaussian(&mut r, 3, 6);
    let j = update_j(&s, &SolverConfig::default()).unwrap();
    assert!(max_abs(&(j - &s.z)) <= 1e-6);
}

#[test]
fn update_z_matches_conjugate_gradient_and_is_stationary() {
    let mut r = rng(23);
    for trial in 0..20 {
        let alpha = if trial % 2 == 0 {
            0.0
        } else {
            r.random_range(0.5..5.0)
        };
        let (s, mask) = random_state(&mut r, 6, 5, 8);
        let cfg = cfg_with(alpha);
        let z = update_z(&s, Some(&mask), &cfg).unwrap();
        let rmat = mask.complement().component_mul(&s.z);

        let oracle = cg_z(&s, &rmat, alpha);
        assert!((&z - &oracle).norm() <= 1e-6 * oracle.norm().max(1.0));

        let g = fd_gradient(|c| z_subproblem(&s, c, &rmat, alpha), &z, 1e-5);
        let linear = &s.d.transpose() * &s.y1 - &s.y2 - &s.y3 + &rmat * alpha;
        let scale = 1.0 + max_abs(&linear) + s.mu * max_abs(&(&s.x - &s.e));
        assert!(
            max_abs(&g) <= 1e-6 * scale,
            "trial {trial}: {}",
            max_abs(&g)
        );
    }
}

#[test]
fn update_z_surrogate_majorizes_block_term() {
    let mut r = rng(24);
    let (s, mask) = random_state(&mut r, 5, 6, 6);
    let alpha = 2.0;
    let rmat = mask.complement().component_mul(&s.z);
    let true_part = |z: &DMatrix<f64>| 0.5 * alpha * offblock_energy(z, &mask).unwrap();
    let surrogate = |z: &DMatrix<f64>| 0.5 * alpha * (z - &rmat).norm_squared();
    assert!((true_part(&s.z) - surrogate(&s.z)).abs() <= 1e-10);
    for _ in 0..200 {
        let z = gaussian(&mut r, 6, 6);
        assert!(surrogate(&z) + 1e-12 >= true_part(&z));
    }
}

#[test]
fn update_z_rejects_alpha_without_mask() {
    let mut r = rng(25);
    let (s, _) = random_state(&mut r, 3, 3, 3);
    assert!(update_z(&s, None, &cfg_with(1.0)).is_err());
    assert!(update_z(&s, None, &cfg_with(0.0)).is_ok());
}

#[test]
fn update_d_is_stationary() {
    let mut r = rng(26);
    for trial in 0..20 {
        let (s, _) = random_state(&mut r, 6, 4, 9);
        let cfg = cfg_with(1.0);
        let d = update_d(&s, &cfg).unwrap();
        let g = fd_gradient(|c| d_subproblem(&s, c, cfg.gamma), &d, 1e-5);
        let linear = (&s.y1 + (&s.x - &s.e) * s.mu) * s.z.transpose();
        assert!(
            max_abs(&g) <= 1e-6 * (1.0 + max_abs(&linear)),
            "trial {trial}"
        );
    }
}

#[test]
fn update_l_and_e_match_scalar_oracle() {
    let mut r = rng(27);
    for _ in 0..10 {
        let (mut s, _) = random_state(&mut r, 5, 4, 6);
        s.mu = r.random_range(0.5..4.0);
        let cfg = cfg_with(1.0);
        let l = update_l(&s, &cfg).unwrap();
        let target = &s.z + &s.y3 / s.mu;
        for (o, v) in l.iter().zip(target.iter()) {
            assert!((o - grid_prox_scalar(*v, cfg.beta / s.mu)).abs() <= 1e-6);
        }
        let e = update_e(&s, &cfg).unwrap();
        let target = &s.x - &s.d * &s.z + &s.y1 / s.mu;
        for (o, v) in e.iter().zip(target.iter()) {
            assert!((o - grid_prox_scalar(*v, cfg.lambda / s.mu)).abs() <= 1e-6);
        }
    }
}

#[test]
fn near_feasible_state_converges() {
    let mut r = rng(28);
    let x = gaussian(&mut r, 5, 6);
    let d = gaussian(&mut r, 5, 4);
    let mut s = SolverState::new(x, d, 1.0).unwrap();
    s.z = gaussian(&mut r, 4, 6);
    s.e = &s.x - &s.d * &s.z;
    let nudge = |m: &DMatrix<f64>, r: &mut ChaCha8Rng| {
        m + common::uniform(r, m.nrows(), m.ncols(), -1e-7, 1e-7)
    };
    s.j = nudge(&s.z, &mut r);
    s.l = nudge(&s.z, &mut r);
    s.e = nudge(&s.e, &mut r);
    let cfg = SolverConfig::default();
    assert!(check_convergence(&s, &cfg));
    let (p, zj, zl) = s.residuals();
    assert!(p <= 1e-7 + 1e-12 && zj <= 1e-7 && zl <= 1e-7);
}

fn small_dataset(seed: u64) -> rbds_core::LabeledDataset {
    gen_subspaces(&SubspaceSpec::new(3, 20, 2, 10, 0.0, seed)).unwrap()
}

#[test]
fn fit_is_deterministic_and_feasible() {
    let data = small_dataset(3);
    let cfg = SolverConfig {
        atoms_per_class: 4,
        seed: 9,
        ..SolverConfig::default()
    };
    let opts = SolveOptions {
        record_objective: true,
    };
    let a = fit_rbds_with(&data, &cfg, &opts).unwrap();
    let b = fit_rbds_with(&data, &cfg, &opts).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.z_train, b.z_train);
    assert_eq!(a.dictionary, b.dictionary);

    assert!(a.converged);
    let (p, zj, zl) = a.final_residuals().unwrap();
    assert!(p < 1e-6 && zj < 1e-6 && zl < 1e-6);
    for w in a.history.windows(2) {
        assert!(w[1].mu >= w[0].mu && w[1].mu <= cfg.mu_max);
    }
}

#[test]
fn clean_data_with_large_lambda_needs_no_error_term() {
    let data = small_dataset(4);
    let cfg = SolverConfig {
        lambda: 20.0,
        atoms_per_class: 4,
        ..SolverConfig::default()
    };
    let model = fit_rbds(&data, &cfg).unwrap();
    assert!(model.converged);
    let x = data.data().normalized_columns();
    let ratio = model.e_train.abs().sum() / x.as_matrix().abs().sum();
    assert!(ratio <= 1e-3, "||E||_1 / ||X||_1 = {ratio}");
}

#[test]
fn mu_is_capped_when_iterations_run_long() {
    let data = small_dataset(5);
    let cfg = SolverConfig {
        mu_max: 1e-3,
        max_iters: 80,
        atoms_per_class: 3,
        ..SolverConfig::default()
    };
    let model = fit_rbds(&data, &cfg).unwrap();
    assert_eq!(model.iterations_used, 80);
    assert!(!model.converged);
    assert!(model.history.iter().all(|r| r.mu <= 1e-3));
    assert_eq!(model.history.last().unwrap().mu, 1e-3);
}

#[test]
fn too_few_samples_names_the_class() {
    let data = small_dataset(6);
    let cfg = SolverConfig {
        atoms_per_class: 11,
        ..SolverConfig::default()
    };
    let err = fit_rbds(&data, &cfg).unwrap_err().to_string();
    assert!(err.contains("class 1"), "{err}");
}
