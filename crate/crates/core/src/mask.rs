//! The incoherence mask that marks atom/sample pairs from different classes.
//!
//! `A(i, j) = 0` when atom `i` and sample `j` share a class and `1`
//! otherwise. With atoms and samples sorted by class the zeros form the
//! diagonal blocks, so `||A ⊙ Z||_F^2` measures how much of a representation
//! falls outside those blocks.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MaskA {
    matrix: DMatrix<f64>,
    atom_labels: Vec<usize>,
    sample_labels: Vec<usize>,
}

impl MaskA {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn atom_labels(&self) -> &[usize] {
        &self.atom_labels
    }

    pub fn sample_labels(&self) -> &[usize] {
        &self.sample_labels
    }

    pub fn shape(&self) -> (usize, usize) {
        self.matrix.shape()
    }

    /// `1 1^T - A`: ones exactly on same-class pairs.
    pub fn complement(&self) -> DMatrix<f64> {
        self.matrix.map(|a| 1.0 - a)
    }
}

pub fn build_mask(atom_labels: &[usize], sample_labels: &[usize]) -> Result<MaskA> {
    if atom_labels.is_empty() || sample_labels.is_empty() {
        return Err(Error::Validation(
            "mask needs at least one atom label and one sample label".into(),
        ));
    }
    if atom_labels.iter().chain(sample_labels).any(|&l| l == 0) {
        return Err(Error::Validation("class ids are 1-based".into()));
    }
    let matrix = DMatrix::from_fn(atom_labels.len(), sample_labels.len(), |i, j| {
        if atom_labels[i] == sample_labels[j] {
            0.0
        } else {
            1.0
        }
    });
    Ok(MaskA {
        matrix,
        atom_labels: atom_labels.to_vec(),
        sample_labels: sample_labels.to_vec(),
    })
}

pub fn complement(a: &MaskA) -> DMatrix<f64> {
    a.complement()
}

/// `||A ⊙ Z||_F^2`.
pub fn offblock_energy(z: &DMatrix<f64>, a: &MaskA) -> Result<f64> {
    if z.shape() != a.shape() {
        return Err(Error::Shape(format!(
            "representation is {:?} but mask is {:?}",
            z.shape(),
            a.shape()
        )));
    }
    Ok(z.iter()
        .zip(a.matrix.iter())
        .map(|(zv, av)| av * zv * zv)
        .sum())
}

/// Off-block energy as a fraction of `||Z||_F^2`; zero for a zero matrix.
pub fn offblock_ratio(z: &DMatrix<f64>, a: &MaskA) -> Result<f64> {
    let total = z.norm_squared();
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(offblock_energy(z, a)? / total)
}
