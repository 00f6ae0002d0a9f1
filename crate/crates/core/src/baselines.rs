//! Reference methods: robust PCA and the two fixed-dictionary ablations.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{DataMatrix, LabeledDataset};
use crate::prox::{inf_norm, l1_norm, soft_threshold, svt_detailed, Threshold};
use crate::solver::{fit_with_dictionary, Dictionary, RbdsModel, SolveOptions, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpcaRecord {
    pub iter: usize,
    /// `||X - A - E||_inf`
    pub residual: f64,
    pub mu: f64,
    /// `||A||_* + lambda ||X - A||_1`, the objective at the feasible pair
    /// `(A, X - A)`. The iterate `E` itself only becomes feasible in the limit.
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct RpcaResult {
    pub a_lowrank: DMatrix<f64>,
    pub e_sparse: DMatrix<f64>,
    pub converged: bool,
    pub iterations_used: usize,
    pub history: Vec<RpcaRecord>,
}

/// `1 / sqrt(max(d, n))`
pub fn default_rpca_lambda(rows: usize, cols: usize) -> f64 {
    1.0 / (rows.max(cols) as f64).sqrt()
}

/// `min ||A||_* + lambda ||E||_1  s.t.  X = A + E` by inexact ALM, using the
/// penalty schedule and stopping tolerance of `cfg`.
pub fn rpca(x: &DataMatrix, lambda: f64, cfg: &SolverConfig) -> Result<RpcaResult> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!(
            "rpca lambda must be > 0, got {lambda}"
        )));
    }
    let cfg = SolverConfig {
        lambda,
        ..cfg.clone()
    };
    cfg.validate()?;

    let x = x.as_matrix();
    let (d, n) = x.shape();
    let mut a = DMatrix::zeros(d, n);
    let mut e = DMatrix::zeros(d, n);
    let mut y = DMatrix::zeros(d, n);
    let mut mu = cfg.mu0;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iter = 0;

    while iter < cfg.max_iters {
        let shrunk = svt_detailed(&(x - &e + &y / mu), Threshold::new(1.0 / mu)?)?;
        a = shrunk.matrix;
        e = soft_threshold(&(x - &a + &y / mu), Threshold::new(lambda / mu)?);
        let resid = x - &a - &e;
        y += &resid * mu;
        let used_mu = mu;
        mu = cfg.mu_max.min(cfg.rho * mu);
        iter += 1;

        let r = inf_norm(&resid);
        if !r.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                iter,
                primal: r,
                zj: 0.0,
                zl: 0.0,
                mu: used_mu,
            });
        }
        history.push(RpcaRecord {
            iter,
            residual: r,
            mu: used_mu,
            objective: shrunk.nuclear_norm + lambda * l1_norm(&(x - &a)),
        });
        if r < cfg.eps_tol {
            converged = true;
            break;
        }
    }
    Ok(RpcaResult {
        a_lowrank: a,
        e_sparse: e,
        converged,
        iterations_used: iter,
        history,
    })
}

/// Low-rank + sparse representation with the training data as a fixed
/// dictionary: no block term, no dictionary learning.
pub fn fit_lrrs(train: &LabeledDataset, cfg: &SolverConfig) -> Result<RbdsModel> {
    fit_lrrs_with(train, cfg, &SolveOptions::default())
}

pub fn fit_lrrs_with(
    train: &LabeledDataset,
    cfg: &SolverConfig,
    opts: &SolveOptions,
) -> Result<RbdsModel> {
    let cfg = SolverConfig {
        alpha: 0.0,
        dict_update_enabled: false,
        ..cfg.clone()
    };
    let dict = Dictionary::from_training(train, cfg.normalize_columns);
    fit_with_dictionary(train, dict, &cfg, opts)
}

/// Block-diagonal term on, dictionary fixed to the training data.
pub fn fit_lrrs_bd(train: &LabeledDataset, cfg: &SolverConfig) -> Result<RbdsModel> {
    fit_lrrs_bd_with(train, cfg, &SolveOptions::default())
}

pub fn fit_lrrs_bd_with(
    train: &LabeledDataset,
    cfg: &SolverConfig,
    opts: &SolveOptions,
) -> Result<RbdsModel> {
    let cfg = SolverConfig {
        dict_update_enabled: false,
        ..cfg.clone()
    };
    let dict = Dictionary::from_training(train, cfg.normalize_columns);
    fit_with_dictionary(train, dict, &cfg, opts)
}
