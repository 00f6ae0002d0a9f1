//! Proximal operators of the l1 norm and the nuclear norm.

use nalgebra::{DMatrix, SVD};

use crate::error::{Error, Result};

/// Singular values this close to the threshold are shrunk to zero.
pub const SVT_TIE_TOLERANCE: f64 = 1e-12;

/// A non-negative, finite shrinkage amount.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::Validation(format!(
                "threshold must be finite and non-negative, got {epsilon}"
            )));
        }
        Ok(Threshold(epsilon))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Scalar shrinkage `S_eps[x]`.
#[inline]
pub fn shrink(x: f64, eps: f64) -> f64 {
    if x > eps {
        x - eps
    } else if x < -eps {
        x + eps
    } else {
        0.0
    }
}

pub fn soft_threshold_scalar(x: f64, eps: Threshold) -> f64 {
    shrink(x, eps.0)
}

/// Elementwise soft-thresholding; the prox of `eps * ||.||_1`.
pub fn soft_threshold(x: &DMatrix<f64>, eps: Threshold) -> DMatrix<f64> {
    x.map(|v| shrink(v, eps.0))
}

fn thin_svd(y: &DMatrix<f64>) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "SVD input contains non-finite values".into(),
        ));
    }
    // Singular values come back sorted in non-increasing order.
    let svd = SVD::new(y.clone(), true, true);
    if svd.singular_values.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric(
            "SVD produced non-finite singular values".into(),
        ));
    }
    Ok(svd)
}

/// Result of singular-value thresholding with the bookkeeping the solvers use.
#[derive(Debug, Clone)]
pub struct Shrunk {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    /// Sum of the shrunk singular values, i.e. the nuclear norm of `matrix`.
    pub nuclear_norm: f64,
}

/// `U * S_tau[Sigma] * V^T`; the prox of `tau * ||.||_*`.
pub fn svt(y: &DMatrix<f64>, tau: Threshold) -> Result<DMatrix<f64>> {
    svt_detailed(y, tau).map(|s| s.matrix)
}

pub fn svt_detailed(y: &DMatrix<f64>, tau: Threshold) -> Result<Shrunk> {
    let svd = thin_svd(y)?;
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("V^T requested");
    let tau = tau.0;

    let kept: Vec<(usize, f64)> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|&(_, &s)| s > tau + SVT_TIE_TOLERANCE)
        .map(|(i, &s)| (i, s - tau))
        .collect();

    let mut out = DMatrix::zeros(y.nrows(), y.ncols());
    for &(i, s) in &kept {
        // rank-one update s * u_i * v_i^T
        out.ger(s, &u.column(i), &v_t.row(i).transpose(), 1.0);
    }
    Ok(Shrunk {
        matrix: out,
        rank: kept.len(),
        nuclear_norm: kept.iter().map(|&(_, s)| s).sum(),
    })
}

pub fn singular_values(y: &DMatrix<f64>) -> Result<Vec<f64>> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "SVD input contains non-finite values".into(),
        ));
    }
    let svd = SVD::new(y.clone(), false, false);
    Ok(svd.singular_values.iter().copied().collect())
}

pub fn nuclear_norm(y: &DMatrix<f64>) -> Result<f64> {
    Ok(singular_values(y)?.iter().sum())
}

pub fn l1_norm(y: &DMatrix<f64>) -> f64 {
    y.iter().map(|v| v.abs()).sum()
}

pub fn inf_norm(y: &DMatrix<f64>) -> f64 {
    y.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
