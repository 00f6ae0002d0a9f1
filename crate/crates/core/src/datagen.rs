//! Seeded synthetic union-of-subspaces data and the two corruption protocols
//! (uniform pixel noise and random block occlusion).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::{normalize_columns, DataMatrix, LabeledDataset};

/// Distribution of the per-sample subspace coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoefficientLaw {
    /// `|N(0, 1)|`: samples fill a cone inside each subspace, so a class is
    /// not closed under negation (like non-negative image data).
    #[default]
    HalfNormal,
    /// `N(0, 1)`: `x` and `-x` are equally likely in every class.
    Gaussian,
}

impl CoefficientLaw {
    pub fn name(self) -> &'static str {
        match self {
            CoefficientLaw::HalfNormal => "half_normal",
            CoefficientLaw::Gaussian => "gaussian",
        }
    }
}

impl std::str::FromStr for CoefficientLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "half_normal" => Ok(CoefficientLaw::HalfNormal),
            "gaussian" => Ok(CoefficientLaw::Gaussian),
            other => Err(Error::Config(format!("unknown coefficient law `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceSpec {
    pub class_count: usize,
    pub ambient_dim: usize,
    pub subspace_rank: usize,
    pub samples_per_class: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub coefficients: CoefficientLaw,
}

impl SubspaceSpec {
    pub fn new(
        class_count: usize,
        ambient_dim: usize,
        subspace_rank: usize,
        samples_per_class: usize,
        noise_sigma: f64,
        seed: u64,
    ) -> Self {
        Self {
            class_count,
            ambient_dim,
            subspace_rank,
            samples_per_class,
            noise_sigma,
            seed,
            coefficients: CoefficientLaw::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count == 0
            || self.ambient_dim == 0
            || self.subspace_rank == 0
            || self.samples_per_class == 0
        {
            return Err(Error::Config("subspace counts must all be >= 1".into()));
        }
        if self.subspace_rank > self.ambient_dim {
            return Err(Error::Config(format!(
                "subspace rank {} exceeds ambient dimension {}",
                self.subspace_rank, self.ambient_dim
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionKind {
    PixelUniform,
    BlockOcclusion,
}

impl CorruptionKind {
    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::PixelUniform => "pixel_uniform",
            CorruptionKind::BlockOcclusion => "block_occlusion",
        }
    }
}

impl std::str::FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pixel_uniform" => Ok(CorruptionKind::PixelUniform),
            "block_occlusion" => Ok(CorruptionKind::BlockOcclusion),
            other => Err(Error::Config(format!("unknown corruption kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    /// Fraction of entries (pixel noise) or occluded area ratio (blocks).
    pub fraction: f64,
    /// `(height, width)` of the image each column represents; required for
    /// block occlusion. Pixels are laid out row-major within a column.
    pub image_shape: Option<(usize, usize)>,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn pixels(fraction: f64, seed: u64) -> Self {
        Self {
            kind: CorruptionKind::PixelUniform,
            fraction,
            image_shape: None,
            seed,
        }
    }

    pub fn blocks(fraction: f64, height: usize, width: usize, seed: u64) -> Self {
        Self {
            kind: CorruptionKind::BlockOcclusion,
            fraction,
            image_shape: Some((height, width)),
            seed,
        }
    }

    fn check_fraction(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::Config(format!(
                "corruption fraction must lie in [0, 1], got {}",
                self.fraction
            )));
        }
        Ok(())
    }
}

/// Orthonormal `d x r` basis from the QR factorization of a Gaussian matrix.
fn random_basis(rng: &mut ChaCha8Rng, d: usize, r: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

pub fn gen_subspaces(spec: &SubspaceSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (d, r, per) = (spec.ambient_dim, spec.subspace_rank, spec.samples_per_class);
    let n = spec.class_count * per;
    let mut x = DMatrix::zeros(d, n);
    let mut labels = Vec::with_capacity(n);
    for c in 0..spec.class_count {
        let basis = random_basis(&mut rng, d, r);
        let coeffs = DMatrix::from_fn(r, per, |_, _| {
            let g = rng.sample::<f64, _>(StandardNormal);
            match spec.coefficients {
                CoefficientLaw::HalfNormal => g.abs(),
                CoefficientLaw::Gaussian => g,
            }
        });
        let mut block = basis * coeffs;
        if spec.noise_sigma > 0.0 {
            block += DMatrix::from_fn(d, per, |_, _| {
                spec.noise_sigma * rng.sample::<f64, _>(StandardNormal)
            });
        }
        x.columns_mut(c * per, per).copy_from(&block);
        labels.extend(std::iter::repeat_n(c + 1, per));
    }
    LabeledDataset::new(DataMatrix::new(normalize_columns(&x))?, labels)
}

/// Replaces exactly `round(fraction * d * n)` distinct entries with values
/// drawn uniformly from `[min(X), max(X)]`. Returns the corrupted matrix and
/// the replaced `(row, col)` positions in column-major order.
pub fn corrupt_pixels(
    x: &DataMatrix,
    spec: &CorruptionSpec,
) -> Result<(DataMatrix, Vec<(usize, usize)>)> {
    if spec.kind != CorruptionKind::PixelUniform {
        return Err(Error::Config(
            "corrupt_pixels needs a pixel_uniform spec".into(),
        ));
    }
    spec.check_fraction()?;
    let (rows, cols) = (x.rows(), x.cols());
    let total = rows * cols;
    let count = ((spec.fraction * total as f64).round() as usize).min(total);
    let (lo, hi) = (x.min_value(), x.max_value());

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut positions: Vec<usize> = rand::seq::index::sample(&mut rng, total, count).into_vec();
    positions.sort_unstable();

    let mut out = x.as_matrix().clone();
    let values = out.as_mut_slice();
    for &p in &positions {
        values[p] = uniform_in(&mut rng, lo, hi);
    }
    let replaced = positions.iter().map(|&p| (p % rows, p / rows)).collect();
    Ok((DataMatrix::new(out)?, replaced))
}

fn uniform_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Occluding square placed on one column's image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockRect {
    pub top: usize,
    pub left: usize,
    pub side: usize,
}

/// Side of the square whose area is `fraction` of an `h x w` image, clipped
/// to fit.
pub fn block_side(fraction: f64, height: usize, width: usize) -> usize {
    let side = (fraction * (height * width) as f64).sqrt().round() as usize;
    side.min(height).min(width)
}

/// Overwrites one randomly placed square per column with uniform values from
/// the data range.
pub fn corrupt_block(
    x: &DataMatrix,
    spec: &CorruptionSpec,
) -> Result<(DataMatrix, Vec<BlockRect>)> {
    if spec.kind != CorruptionKind::BlockOcclusion {
        return Err(Error::Config(
            "corrupt_block needs a block_occlusion spec".into(),
        ));
    }
    spec.check_fraction()?;
    let (h, w) = spec
        .image_shape
        .ok_or_else(|| Error::Config("block occlusion needs an image shape".into()))?;
    if h * w != x.rows() {
        return Err(Error::Shape(format!(
            "image shape {h}x{w} does not match {} features",
            x.rows()
        )));
    }
    let side = block_side(spec.fraction, h, w);
    let (lo, hi) = (x.min_value(), x.max_value());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = x.as_matrix().clone();
    let mut rects = Vec::with_capacity(x.cols());
    for c in 0..x.cols() {
        let top = rng.random_range(0..=h - side);
        let left = rng.random_range(0..=w - side);
        for r in top..top + side {
            for q in left..left + side {
                out[(r * w + q, c)] = uniform_in(&mut rng, lo, hi);
            }
        }
        rects.push(BlockRect { top, left, side });
    }
    Ok((DataMatrix::new(out)?, rects))
}

/// Dispatches on the corruption kind and drops the bookkeeping.
pub fn corrupt(x: &DataMatrix, spec: &CorruptionSpec) -> Result<DataMatrix> {
    match spec.kind {
        CorruptionKind::PixelUniform => corrupt_pixels(x, spec).map(|(m, _)| m),
        CorruptionKind::BlockOcclusion => corrupt_block(x, spec).map(|(m, _)| m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64) -> SubspaceSpec {
        SubspaceSpec::new(3, 10, 2, 20, 0.0, seed)
    }

    #[test]
    fn subspace_shape_and_labels() {
        let ds = gen_subspaces(&spec(1)).unwrap();
        assert_eq!((ds.data().rows(), ds.data().cols()), (10, 60));
        let expected: Vec<usize> = (1..=3).flat_map(|c| std::iter::repeat_n(c, 20)).collect();
        assert_eq!(ds.labels(), expected.as_slice());
        assert_eq!(ds, gen_subspaces(&spec(1)).unwrap());
        assert_ne!(ds, gen_subspaces(&spec(2)).unwrap());
    }

    #[test]
    fn rank_above_dimension_rejected() {
        let bad = SubspaceSpec {
            subspace_rank: 11,
            ..spec(0)
        };
        assert!(gen_subspaces(&bad).is_err());
    }

    #[test]
    fn pixel_fraction_zero_is_identity() {
        let ds = gen_subspaces(&spec(3)).unwrap();
        let (out, idx) = corrupt_pixels(ds.data(), &CorruptionSpec::pixels(0.0, 9)).unwrap();
        assert_eq!(&out, ds.data());
        assert!(idx.is_empty());
    }

    #[test]
    fn pixel_counts_and_range() {
        let x = DataMatrix::new(DMatrix::from_fn(10, 10, |i, j| (i * 10 + j) as f64)).unwrap();
        let (out, idx) = corrupt_pixels(&x, &CorruptionSpec::pixels(0.1, 4)).unwrap();
        assert_eq!(idx.len(), 10);
        for &(r, c) in &idx {
            assert!((0.0..=99.0).contains(&out.get(r, c)));
        }
        let (all, _) = corrupt_pixels(&x, &CorruptionSpec::pixels(1.0, 4)).unwrap();
        assert!(all.as_matrix().iter().all(|v| (0.0..=99.0).contains(v)));
        assert!(corrupt_pixels(&x, &CorruptionSpec::pixels(1.5, 4)).is_err());
        assert!(corrupt_pixels(&x, &CorruptionSpec::pixels(-0.1, 4)).is_err());
    }

    #[test]
    fn block_examples() {
        let x = DataMatrix::new(DMatrix::from_fn(16, 3, |i, j| (i + j) as f64)).unwrap();
        let (same, _) = corrupt_block(&x, &CorruptionSpec::blocks(0.0, 4, 4, 1)).unwrap();
        assert_eq!(same, x);

        let (full, rects) = corrupt_block(&x, &CorruptionSpec::blocks(1.0, 4, 4, 1)).unwrap();
        assert!(rects.iter().all(|r| *r
            == BlockRect {
                top: 0,
                left: 0,
                side: 4
            }));
        assert!(full.as_matrix().iter().all(|v| (0.0..=18.0).contains(v)));

        assert_eq!(block_side(0.25, 28, 28), 14);
        assert!(corrupt_block(&x, &CorruptionSpec::blocks(0.2, 5, 4, 1)).is_err());
        assert!(corrupt_block(&x, &CorruptionSpec::pixels(0.2, 1)).is_err());
    }
}
