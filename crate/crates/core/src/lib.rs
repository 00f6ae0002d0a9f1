//! Block-diagonal low-rank + sparse representation learning.
//!
//! The crate learns a class-labeled dictionary `D`, a representation `Z`
//! and a sparse error `E` with `X = D Z + E`, encouraging `Z` to be low
//! rank, sparse and concentrated on same-class atom/sample pairs. A ridge
//! classifier on `Z` then labels test samples coded against `D`.
//!
//! Module map:
//!
//! * [`matrix`]: dense matrices, labeled datasets, CSV and raw binary I/O.
//! * [`prox`]: soft-thresholding and singular value thresholding.
//! * [`mask`]: the same-class incoherence mask and off-block energy.
//! * [`solver`]: the inexact ALM solver with dictionary learning.
//! * [`coder`]: test-time coding against a fixed dictionary.
//! * [`classifier`]: closed-form ridge classifier on representations.
//! * [`baselines`]: RPCA and the fixed-dictionary ablations.
//! * [`datagen`]: synthetic subspace data and corruption protocols.
//! * [`methods`]: name-keyed registry of the trainable methods.

pub mod baselines;
pub mod classifier;
pub mod coder;
pub mod datagen;
pub mod error;
pub mod mask;
pub mod matrix;
pub mod methods;
pub mod prox;
pub mod solver;

pub use error::{Error, Result};
pub use matrix::{DataMatrix, LabelMatrix, LabeledDataset, MatrixFormat};
pub use solver::{Dictionary, RbdsModel, SolverConfig};
