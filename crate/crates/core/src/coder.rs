//! Test-time low-rank + sparse coding against a fixed dictionary:
//!
//! ```text
//! min ||Z||_* + lambda ||E||_1 + beta ||Z||_1   s.t.  X = D Z + E
//! ```
//!
//! solved with the training loop minus the block term and the dictionary
//! step.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::prox::{l1_norm, nuclear_norm};
use crate::solver::{prepare_data, run_alm, Dictionary, SolveOptions, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CodingMode {
    /// One problem over the whole test matrix.
    #[default]
    Joint,
    /// One problem per test column.
    PerSample,
}

#[derive(Debug, Clone)]
pub struct CodingResult {
    pub z_hat: DMatrix<f64>,
    pub e_hat: DMatrix<f64>,
    pub converged: bool,
    pub iterations_used: usize,
}

impl CodingResult {
    pub fn len(&self) -> usize {
        self.z_hat.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.z_hat.ncols() == 0
    }
}

/// The solver settings used for coding: no block term, dictionary fixed.
pub fn coding_config(cfg: &SolverConfig) -> SolverConfig {
    SolverConfig {
        alpha: 0.0,
        dict_update_enabled: false,
        ..cfg.clone()
    }
}

pub fn code(test: &DataMatrix, dict: &Dictionary, cfg: &SolverConfig) -> Result<CodingResult> {
    code_with_mode(test, dict, cfg, CodingMode::Joint)
}

pub fn code_with_mode(
    test: &DataMatrix,
    dict: &Dictionary,
    cfg: &SolverConfig,
    mode: CodingMode,
) -> Result<CodingResult> {
    if test.rows() != dict.atoms.rows() {
        return Err(Error::Shape(format!(
            "test samples have {} features but dictionary atoms have {}",
            test.rows(),
            dict.atoms.rows()
        )));
    }
    let cfg = coding_config(cfg);
    let x = prepare_data(test, &cfg);
    let d = dict.atoms.as_matrix();
    match mode {
        CodingMode::Joint => {
            let out = run_alm(x, d.clone(), None, &cfg, &SolveOptions::default())?;
            Ok(CodingResult {
                z_hat: out.state.z,
                e_hat: out.state.e,
                converged: out.converged,
                iterations_used: out.state.iter,
            })
        }
        CodingMode::PerSample => {
            let mut z_hat = DMatrix::zeros(d.ncols(), x.ncols());
            let mut e_hat = DMatrix::zeros(x.nrows(), x.ncols());
            let mut converged = true;
            let mut iterations_used = 0;
            for (j, col) in x.column_iter().enumerate() {
                let out = run_alm(
                    DMatrix::from_column_slice(col.len(), 1, col.as_slice()),
                    d.clone(),
                    None,
                    &cfg,
                    &SolveOptions::default(),
                )?;
                z_hat.set_column(j, &out.state.z.column(0));
                e_hat.set_column(j, &out.state.e.column(0));
                converged &= out.converged;
                iterations_used = iterations_used.max(out.state.iter);
            }
            Ok(CodingResult {
                z_hat,
                e_hat,
                converged,
                iterations_used,
            })
        }
    }
}

/// `||Z||_* + lambda ||E||_1 + beta ||Z||_1`
pub fn coding_objective(z: &DMatrix<f64>, e: &DMatrix<f64>, cfg: &SolverConfig) -> Result<f64> {
    Ok(nuclear_norm(z)? + cfg.lambda * l1_norm(e) + cfg.beta * l1_norm(z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_cfg() -> SolverConfig {
        SolverConfig {
            normalize_columns: false,
            ..Default::default()
        }
    }

    #[test]
    fn zero_test_matrix_codes_to_zero() {
        let dict = Dictionary::new(DataMatrix::identity(4).unwrap(), vec![1, 1, 2, 2]).unwrap();
        let test = DataMatrix::new(DMatrix::zeros(4, 3)).unwrap();
        let out = code(&test, &dict, &raw_cfg()).unwrap();
        assert!(out.converged);
        assert!(coding_objective(&out.z_hat, &out.e_hat, &raw_cfg()).unwrap() <= 1e-8);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let dict = Dictionary::new(DataMatrix::identity(4).unwrap(), vec![1, 1, 2, 2]).unwrap();
        let test = DataMatrix::new(DMatrix::from_element(3, 2, 1.0)).unwrap();
        assert!(matches!(
            code(&test, &dict, &raw_cfg()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn atom_as_test_sample_is_feasible() {
        let dict = Dictionary::new(DataMatrix::identity(5).unwrap(), vec![1, 1, 2, 2, 3]).unwrap();
        let test = DataMatrix::new(DMatrix::identity(5, 5).columns(2, 1).into_owned()).unwrap();
        let cfg = raw_cfg();
        let out = code(&test, &dict, &cfg).unwrap();
        assert!(out.converged);
        let resid = test.as_matrix() - dict.atoms.as_matrix() * &out.z_hat - &out.e_hat;
        assert!(resid.amax() < cfg.eps_tol);
    }
}
