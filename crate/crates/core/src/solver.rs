//! Inexact augmented Lagrange multiplier solver for block-diagonal
//! low-rank + sparse representations with dictionary learning.
//!
//! The problem solved is
//!
//! ```text
//! min  ||Z||_* + lambda ||E||_1 + alpha/2 ||A ⊙ Z||_F^2 + beta ||Z||_1 + gamma/2 ||D||_F^2
//! s.t. X = D Z + E
//! ```
//!
//! split with auxiliary variables `J = Z` (nuclear term) and `L = Z`
//! (l1 term). Every iteration updates `J, Z, L, E, D` in that order, then
//! the multipliers `Y1, Y2, Y3` and the penalty `mu`.
//!
//! Turning the dictionary update off and setting `alpha = 0` reduces the
//! loop to plain low-rank + sparse coding against a fixed dictionary, which
//! is how the baselines and the test-time coder reuse it.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mask::{build_mask, offblock_energy, MaskA};
use crate::matrix::{normalize_columns, write_atomic, DataMatrix, LabeledDataset};
use crate::prox::{inf_norm, l1_norm, nuclear_norm, soft_threshold, svt, Threshold};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Weight of `||E||_1`.
    pub lambda: f64,
    /// Weight of the block-diagonal term.
    pub alpha: f64,
    /// Weight of `||Z||_1`.
    pub beta: f64,
    /// Weight of `||D||_F^2`.
    pub gamma: f64,
    pub mu0: f64,
    pub mu_max: f64,
    pub rho: f64,
    pub eps_tol: f64,
    pub max_iters: usize,
    pub atoms_per_class: usize,
    pub dict_update_enabled: bool,
    pub seed: u64,
    /// Scale every sample to unit l2 length before solving.
    pub normalize_columns: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            alpha: 1.0,
            beta: 0.1,
            gamma: 1.0,
            mu0: 1e-5,
            mu_max: 1e8,
            rho: 1.1,
            eps_tol: 1e-6,
            max_iters: 500,
            atoms_per_class: 5,
            dict_update_enabled: true,
            seed: 0,
            normalize_columns: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("lambda", self.lambda),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("mu0", self.mu0),
            ("mu_max", self.mu_max),
            ("rho", self.rho),
            ("eps_tol", self.eps_tol),
        ];
        if let Some((name, v)) = finite.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Config(format!("{name} must be finite, got {v}")));
        }
        if self.lambda <= 0.0 {
            return Err(Error::Config(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if v < 0.0 {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.mu0 <= 0.0 || self.mu_max <= self.mu0 {
            return Err(Error::Config(format!(
                "need 0 < mu0 < mu_max, got mu0 = {}, mu_max = {}",
                self.mu0, self.mu_max
            )));
        }
        if self.rho <= 1.0 {
            return Err(Error::Config(format!("rho must be > 1, got {}", self.rho)));
        }
        if self.eps_tol <= 0.0 {
            return Err(Error::Config(format!(
                "eps_tol must be > 0, got {}",
                self.eps_tol
            )));
        }
        if self.max_iters == 0 || self.atoms_per_class == 0 {
            return Err(Error::Config(
                "max_iters and atoms_per_class must be positive".into(),
            ));
        }
        Ok(())
    }

    fn threshold(v: f64) -> Result<Threshold> {
        Threshold::new(v)
    }
}

/// Dictionary atoms (columns) with one class id per atom.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub atoms: DataMatrix,
    pub atom_labels: Vec<usize>,
}

impl Dictionary {
    pub fn new(atoms: DataMatrix, atom_labels: Vec<usize>) -> Result<Self> {
        if atom_labels.len() != atoms.cols() {
            return Err(Error::Shape(format!(
                "{} atom labels for {} atoms",
                atom_labels.len(),
                atoms.cols()
            )));
        }
        Ok(Self { atoms, atom_labels })
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.cols()
    }

    /// Every training sample as an atom.
    pub fn from_training(train: &LabeledDataset, normalize: bool) -> Self {
        let atoms = if normalize {
            train.data().normalized_columns()
        } else {
            train.data().clone()
        };
        Self {
            atoms,
            atom_labels: train.labels().to_vec(),
        }
    }
}

/// Seeded initial dictionary: `atoms_per_class` distinct training columns per
/// class, unit-normalized, grouped by class.
pub fn init_dictionary(
    train: &LabeledDataset,
    atoms_per_class: usize,
    seed: u64,
) -> Result<Dictionary> {
    if atoms_per_class == 0 {
        return Err(Error::Config("atoms_per_class must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(atoms_per_class * train.class_count());
    let mut labels = Vec::with_capacity(picked.capacity());
    for class in 1..=train.class_count() {
        let members = train.indices_of_class(class);
        if members.len() < atoms_per_class {
            return Err(Error::Config(format!(
                "class {class} has {} training samples but {atoms_per_class} atoms per class were requested",
                members.len()
            )));
        }
        let mut chosen: Vec<usize> =
            rand::seq::index::sample(&mut rng, members.len(), atoms_per_class)
                .into_iter()
                .map(|i| members[i])
                .collect();
        chosen.sort_unstable();
        picked.extend(chosen);
        labels.extend(std::iter::repeat_n(class, atoms_per_class));
    }
    let atoms = normalize_columns(&train.data().as_matrix().select_columns(&picked));
    Dictionary::new(DataMatrix::new(atoms)?, labels)
}

/// Per-iteration record: infinity-norm residuals of the three constraints
/// and the penalty used in that iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// `||X - D Z - E||_inf`
    pub primal: f64,
    /// `||Z - J||_inf`
    pub zj: f64,
    /// `||Z - L||_inf`
    pub zl: f64,
    pub mu: f64,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub y1: DMatrix<f64>,
    pub y2: DMatrix<f64>,
    pub y3: DMatrix<f64>,
    pub mu: f64,
    pub iter: usize,
    pub residual_history: Vec<IterationRecord>,
}

impl SolverState {
    /// All iterates and multipliers start at zero.
    pub fn new(x: DMatrix<f64>, d: DMatrix<f64>, mu0: f64) -> Result<Self> {
        if x.nrows() != d.nrows() {
            return Err(Error::Shape(format!(
                "data has {} rows but dictionary atoms have {}",
                x.nrows(),
                d.nrows()
            )));
        }
        let (dim, n) = x.shape();
        let m = d.ncols();
        Ok(Self {
            x,
            z: DMatrix::zeros(m, n),
            j: DMatrix::zeros(m, n),
            l: DMatrix::zeros(m, n),
            e: DMatrix::zeros(dim, n),
            d,
            y1: DMatrix::zeros(dim, n),
            y2: DMatrix::zeros(m, n),
            y3: DMatrix::zeros(m, n),
            mu: mu0,
            iter: 0,
            residual_history: Vec::new(),
        })
    }

    /// `X - D Z - E`
    pub fn primal_residual(&self) -> DMatrix<f64> {
        &self.x - &self.d * &self.z - &self.e
    }

    /// `(||X - DZ - E||_inf, ||Z - J||_inf, ||Z - L||_inf)`
    pub fn residuals(&self) -> (f64, f64, f64) {
        (
            inf_norm(&self.primal_residual()),
            inf_norm(&(&self.z - &self.j)),
            inf_norm(&(&self.z - &self.l)),
        )
    }

    fn all_finite(&self) -> bool {
        [
            &self.z, &self.j, &self.l, &self.e, &self.d, &self.y1, &self.y2, &self.y3,
        ]
        .iter()
        .all(|m| m.iter().all(|v| v.is_finite()))
            && self.mu.is_finite()
    }
}

/// `J = svt(Z + Y2/mu, 1/mu)`
pub fn update_j(state: &SolverState, _cfg: &SolverConfig) -> Result<DMatrix<f64>> {
    let target = &state.z + &state.y2 / state.mu;
    svt(&target, SolverConfig::threshold(1.0 / state.mu)?)
}

/// Closed-form Z step with the block term replaced by `alpha/2 ||Z - R||_F^2`,
/// `R = M ⊙ Z_prev`, `M` the same-class complement of the mask.
pub fn update_z(
    state: &SolverState,
    mask: Option<&MaskA>,
    cfg: &SolverConfig,
) -> Result<DMatrix<f64>> {
    let mu = state.mu;
    let m = state.d.ncols();
    let dt = state.d.transpose();

    let mut rhs = &dt * (&state.x - &state.e)
        + &state.j
        + &state.l
        + (&dt * &state.y1 - &state.y2 - &state.y3) / mu;
    if cfg.alpha > 0.0 {
        let mask = mask.ok_or_else(|| {
            Error::Config("alpha > 0 needs atom and sample labels for the mask".into())
        })?;
        if mask.shape() != state.z.shape() {
            return Err(Error::Shape(format!(
                "mask is {:?} but Z is {:?}",
                mask.shape(),
                state.z.shape()
            )));
        }
        let r = mask.complement().component_mul(&state.z);
        rhs += r * (cfg.alpha / mu);
    }

    let mut lhs = &dt * &state.d;
    let shift = cfg.alpha / mu + 2.0;
    for i in 0..m {
        lhs[(i, i)] += shift;
    }
    let chol = lhs
        .cholesky()
        .ok_or_else(|| Error::Numeric("Z-step system is not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

/// `L = S_{beta/mu}[Z + Y3/mu]`
pub fn update_l(state: &SolverState, cfg: &SolverConfig) -> Result<DMatrix<f64>> {
    let target = &state.z + &state.y3 / state.mu;
    Ok(soft_threshold(
        &target,
        SolverConfig::threshold(cfg.beta / state.mu)?,
    ))
}

/// `E = S_{lambda/mu}[X - D Z + Y1/mu]`
pub fn update_e(state: &SolverState, cfg: &SolverConfig) -> Result<DMatrix<f64>> {
    let target = &state.x - &state.d * &state.z + &state.y1 / state.mu;
    Ok(soft_threshold(
        &target,
        SolverConfig::threshold(cfg.lambda / state.mu)?,
    ))
}

/// `D = [Y1 Z^T / mu - (E - X) Z^T] (gamma/mu I + Z Z^T)^-1`
pub fn update_d(state: &SolverState, cfg: &SolverConfig) -> Result<DMatrix<f64>> {
    let mu = state.mu;
    let zt = state.z.transpose();
    let b = (&state.y1 / mu - &state.e + &state.x) * &zt;
    let mut k = &state.z * &zt;
    let m = k.nrows();
    for i in 0..m {
        k[(i, i)] += cfg.gamma / mu;
    }
    // K is symmetric, so D K = B  <=>  K D^T = B^T.
    let chol = k.cholesky().ok_or_else(|| {
        Error::Numeric("dictionary-step system is not positive definite (gamma = 0?)".into())
    })?;
    Ok(chol.solve(&b.transpose()).transpose())
}

/// Multiplier ascent on the three constraints followed by `mu <- min(mu_max, rho mu)`.
pub fn update_multipliers(
    state: &SolverState,
    cfg: &SolverConfig,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, f64) {
    let mu = state.mu;
    let y1 = &state.y1 + state.primal_residual() * mu;
    let y2 = &state.y2 + (&state.z - &state.j) * mu;
    let y3 = &state.y3 + (&state.z - &state.l) * mu;
    (y1, y2, y3, cfg.mu_max.min(cfg.rho * mu))
}

/// Strict `< eps_tol` on all three infinity-norm residuals.
pub fn check_convergence(state: &SolverState, cfg: &SolverConfig) -> bool {
    let (p, zj, zl) = state.residuals();
    p < cfg.eps_tol && zj < cfg.eps_tol && zl < cfg.eps_tol
}

/// Objective value at `(Z, E, D)`. The block term is included when a mask is
/// given and the dictionary term when dictionary updates are enabled.
pub fn objective(
    z: &DMatrix<f64>,
    e: &DMatrix<f64>,
    d: &DMatrix<f64>,
    mask: Option<&MaskA>,
    cfg: &SolverConfig,
) -> Result<f64> {
    let mut obj = nuclear_norm(z)? + cfg.lambda * l1_norm(e) + cfg.beta * l1_norm(z);
    if let Some(mask) = mask {
        obj += 0.5 * cfg.alpha * offblock_energy(z, mask)?;
    }
    if cfg.dict_update_enabled {
        obj += 0.5 * cfg.gamma * d.norm_squared();
    }
    Ok(obj)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveOptions {
    /// Evaluate the objective every iteration (costs one extra SVD).
    pub record_objective: bool,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub state: SolverState,
    pub converged: bool,
}

/// Runs the ALM iterations from the all-zero start until the residual test
/// passes or `max_iters` is reached.
pub fn run_alm(
    x: DMatrix<f64>,
    d: DMatrix<f64>,
    mask: Option<&MaskA>,
    cfg: &SolverConfig,
    opts: &SolveOptions,
) -> Result<SolveOutcome> {
    cfg.validate()?;
    let mut state = SolverState::new(x, d, cfg.mu0)?;
    let mut converged = false;
    let mask = if cfg.alpha > 0.0 { mask } else { None };

    while state.iter < cfg.max_iters {
        let mu = state.mu;
        state.j = update_j(&state, cfg)?;
        state.z = update_z(&state, mask, cfg)?;
        state.l = update_l(&state, cfg)?;
        state.e = update_e(&state, cfg)?;
        if cfg.dict_update_enabled {
            state.d = update_d(&state, cfg)?;
        }
        let (y1, y2, y3, next_mu) = update_multipliers(&state, cfg);
        state.y1 = y1;
        state.y2 = y2;
        state.y3 = y3;
        state.mu = next_mu;
        state.iter += 1;

        let (primal, zj, zl) = state.residuals();
        if !state.all_finite() || !(primal.is_finite() && zj.is_finite() && zl.is_finite()) {
            return Err(Error::Diverged {
                iter: state.iter,
                primal,
                zj,
                zl,
                mu,
            });
        }
        let objective = if opts.record_objective {
            Some(objective(&state.z, &state.e, &state.d, mask, cfg)?)
        } else {
            None
        };
        state.residual_history.push(IterationRecord {
            iter: state.iter,
            primal,
            zj,
            zl,
            mu,
            objective,
        });
        if primal < cfg.eps_tol && zj < cfg.eps_tol && zl < cfg.eps_tol {
            converged = true;
            break;
        }
    }
    Ok(SolveOutcome { state, converged })
}

/// Learned dictionary and training representation.
#[derive(Debug, Clone)]
pub struct RbdsModel {
    pub dictionary: Dictionary,
    pub z_train: DMatrix<f64>,
    pub e_train: DMatrix<f64>,
    pub train_labels: Vec<usize>,
    pub config: SolverConfig,
    pub converged: bool,
    pub iterations_used: usize,
    pub history: Vec<IterationRecord>,
}

impl RbdsModel {
    pub fn mask(&self) -> Result<MaskA> {
        build_mask(&self.dictionary.atom_labels, &self.train_labels)
    }

    /// `||A ⊙ Z||_F^2 / ||Z||_F^2` of the training representation.
    pub fn offblock_ratio(&self) -> Result<f64> {
        crate::mask::offblock_ratio(&self.z_train, &self.mask()?)
    }

    pub fn final_residuals(&self) -> Option<(f64, f64, f64)> {
        self.history.last().map(|r| (r.primal, r.zj, r.zl))
    }
}

pub(crate) fn prepare_data(data: &DataMatrix, cfg: &SolverConfig) -> DMatrix<f64> {
    if cfg.normalize_columns {
        normalize_columns(data.as_matrix())
    } else {
        data.as_matrix().clone()
    }
}

/// Runs the solver with a given starting (or fixed) dictionary.
pub fn fit_with_dictionary(
    train: &LabeledDataset,
    dictionary: Dictionary,
    cfg: &SolverConfig,
    opts: &SolveOptions,
) -> Result<RbdsModel> {
    cfg.validate()?;
    let x = prepare_data(train.data(), cfg);
    let mask = build_mask(&dictionary.atom_labels, train.labels())?;
    let outcome = run_alm(
        x,
        dictionary.atoms.as_matrix().clone(),
        Some(&mask),
        cfg,
        opts,
    )?;
    let SolveOutcome { state, converged } = outcome;
    Ok(RbdsModel {
        dictionary: Dictionary::new(DataMatrix::new(state.d)?, dictionary.atom_labels)?,
        z_train: state.z,
        e_train: state.e,
        train_labels: train.labels().to_vec(),
        config: cfg.clone(),
        converged,
        iterations_used: state.iter,
        history: state.residual_history,
    })
}

pub fn fit_rbds(train: &LabeledDataset, cfg: &SolverConfig) -> Result<RbdsModel> {
    fit_rbds_with(train, cfg, &SolveOptions::default())
}

pub fn fit_rbds_with(
    train: &LabeledDataset,
    cfg: &SolverConfig,
    opts: &SolveOptions,
) -> Result<RbdsModel> {
    cfg.validate()?;
    let dictionary = init_dictionary(train, cfg.atoms_per_class, cfg.seed)?;
    fit_with_dictionary(train, dictionary, cfg, opts)
}

pub fn trace_to_csv(history: &[IterationRecord]) -> String {
    let mut out = String::from("iter,primal_residual,zj_residual,zl_residual,mu,objective\n");
    for r in history {
        let obj = r.objective.map(|o| format!("{o:e}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{}",
            r.iter, r.primal, r.zj, r.zl, r.mu, obj
        );
    }
    out
}

pub fn write_trace(history: &[IterationRecord], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), trace_to_csv(history).as_bytes())
}
