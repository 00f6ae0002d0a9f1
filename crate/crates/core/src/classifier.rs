//! Closed-form ridge classifier on representations.
//!
//! `W = argmin ||H - W Z||_F^2 + eta ||W||_F^2 = H Z^T (Z Z^T + eta I)^-1`;
//! a coded test sample `z` is assigned the class of the largest entry of `W z`.

use nalgebra::DMatrix;

use crate::coder::CodingResult;
use crate::error::{Error, Result};
use crate::matrix::LabelMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub w: DMatrix<f64>,
    pub eta: f64,
}

impl ClassifierModel {
    pub fn new(w: DMatrix<f64>, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Config(format!(
                "eta must be finite and > 0, got {eta}"
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "classifier weights must be finite".into(),
            ));
        }
        Ok(Self { w, eta })
    }

    pub fn class_count(&self) -> usize {
        self.w.nrows()
    }
}

pub fn train_classifier(z: &DMatrix<f64>, h: &LabelMatrix, eta: f64) -> Result<ClassifierModel> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Config(format!(
            "eta must be finite and > 0, got {eta}"
        )));
    }
    let h = h.as_matrix();
    if h.ncols() != z.ncols() {
        return Err(Error::Shape(format!(
            "label matrix has {} columns but the representation has {}",
            h.ncols(),
            z.ncols()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("representation must be finite".into()));
    }
    let zt = z.transpose();
    let mut gram = z * &zt;
    for i in 0..gram.nrows() {
        gram[(i, i)] += eta;
    }
    let rhs = h * &zt;
    // Gram is symmetric: W G = H Z^T  <=>  G W^T = Z H^T.
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numeric("ridge system is not positive definite".into()))?;
    ClassifierModel::new(chol.solve(&rhs.transpose()).transpose(), eta)
}

/// 1-based class per column of `z_hat`; ties go to the smallest class id.
pub fn predict(model: &ClassifierModel, z_hat: &DMatrix<f64>) -> Result<Vec<usize>> {
    if z_hat.nrows() != model.w.ncols() {
        return Err(Error::Shape(format!(
            "classifier expects {} coefficients, got {}",
            model.w.ncols(),
            z_hat.nrows()
        )));
    }
    let scores = &model.w * z_hat;
    Ok(scores
        .column_iter()
        .map(|col| {
            let mut best = 0;
            for i in 1..col.len() {
                if col[i] > col[best] {
                    best = i;
                }
            }
            best + 1
        })
        .collect())
}

/// Fraction of correctly classified columns.
pub fn evaluate(
    model: &ClassifierModel,
    coding: &CodingResult,
    true_labels: &[usize],
) -> Result<f64> {
    if true_labels.is_empty() {
        return Err(Error::Validation(
            "cannot evaluate an empty test set".into(),
        ));
    }
    if true_labels.len() != coding.z_hat.ncols() {
        return Err(Error::Shape(format!(
            "{} labels for {} coded samples",
            true_labels.len(),
            coding.z_hat.ncols()
        )));
    }
    let predicted = predict(model, &coding.z_hat)?;
    Ok(accuracy(&predicted, true_labels))
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}
