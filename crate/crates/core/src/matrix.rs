//! Dense matrices, labeled datasets and their on-disk formats.
//!
//! Samples are stored column-wise throughout the crate: a dataset of `n`
//! samples with `d` features is a `d x n` matrix.
//!
//! Two file formats are supported:
//!
//! * CSV: a `rows,cols` header line followed by one line per matrix row.
//! * rawbin: the magic bytes `RBDSMAT0`, the row and column counts as
//!   little-endian `u64`, then `rows * cols` little-endian `f64` values in
//!   row-major order.
//!
//! Class labels live in a sidecar file with one 1-based integer per line.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const RAWBIN_MAGIC: &[u8; 8] = b"RBDSMAT0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    RawBin,
}

impl MatrixFormat {
    pub fn name(self) -> &'static str {
        match self {
            MatrixFormat::Csv => "csv",
            MatrixFormat::RawBin => "rawbin",
        }
    }

    /// Picks a format from a file extension; anything other than `.bin`
    /// is treated as CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("rawbin") => MatrixFormat::RawBin,
            _ => MatrixFormat::Csv,
        }
    }
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(MatrixFormat::Csv),
            "rawbin" | "bin" => Ok(MatrixFormat::RawBin),
            other => Err(Error::Config(format!("unknown matrix format `{other}`"))),
        }
    }
}

/// A dense, finite, non-empty real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix(DMatrix<f64>);

impl DataMatrix {
    /// Builds a matrix from values given in row-major order.
    pub fn from_row_major(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, values))
    }

    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::Validation(format!(
                "matrix must be non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if let Some(idx) = m.iter().position(|v| !v.is_finite()) {
            let (r, c) = (idx % m.nrows(), idx / m.nrows());
            return Err(Error::Validation(format!(
                "non-finite value {} at row {}, column {}",
                m[(r, c)],
                r + 1,
                c + 1
            )));
        }
        Ok(DataMatrix(m))
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(DMatrix::identity(n, n))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    /// Values in row-major order.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.0.transpose().as_slice().to_vec()
    }

    pub fn min_value(&self) -> f64 {
        self.0.min()
    }

    pub fn max_value(&self) -> f64 {
        self.0.max()
    }

    pub fn select_columns(&self, idx: &[usize]) -> Result<Self> {
        Self::new(self.0.select_columns(idx))
    }

    /// Scales every non-zero column to unit Euclidean length.
    pub fn normalized_columns(&self) -> Self {
        DataMatrix(normalize_columns(&self.0))
    }
}

impl AsRef<DMatrix<f64>> for DataMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

pub(crate) fn normalize_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    out
}

/// Column samples with 1-based class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    data: DataMatrix,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    pub fn new(data: DataMatrix, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != data.cols() {
            return Err(Error::Shape(format!(
                "{} labels for {} samples",
                labels.len(),
                data.cols()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l == 0) {
            return Err(Error::Validation(format!(
                "class ids are 1-based, found {bad}"
            )));
        }
        let class_count = labels.iter().copied().max().unwrap_or(0);
        let mut seen = vec![false; class_count];
        for &l in &labels {
            seen[l - 1] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Validation(format!(
                "class {} has no samples (classes must be 1..={class_count})",
                missing + 1
            )));
        }
        Ok(Self {
            data,
            labels,
            class_count,
        })
    }

    pub fn data(&self) -> &DataMatrix {
        &self.data
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of samples per class, indexed by `class - 1`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l - 1] += 1;
        }
        counts
    }

    /// Column indices of the samples belonging to `class`.
    pub fn indices_of_class(&self, class: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == class).then_some(i))
            .collect()
    }

    /// Same samples with the data replaced, e.g. after corruption.
    pub fn with_data(&self, data: DataMatrix) -> Result<Self> {
        Self::new(data, self.labels.clone())
    }

    /// Subset of columns. The result must still contain every class.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Self::new(self.data.select_columns(idx)?, labels)
    }
}

/// One-hot `C x n` label matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix(DMatrix<f64>);

impl LabelMatrix {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn class_count(&self) -> usize {
        self.0.nrows()
    }
}

pub fn one_hot(ds: &LabeledDataset) -> LabelMatrix {
    one_hot_labels(ds.labels(), ds.class_count())
}

pub(crate) fn one_hot_labels(labels: &[usize], class_count: usize) -> LabelMatrix {
    let mut h = DMatrix::zeros(class_count, labels.len());
    for (j, &l) in labels.iter().enumerate() {
        h[(l - 1, j)] = 1.0;
    }
    LabelMatrix(h)
}

fn format_value(v: f64, out: &mut String) {
    // Display is shortest-round-trip, scientific keeps extremes short.
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        let _ = write!(out, "{v}");
    } else {
        let _ = write!(out, "{v:e}");
    }
}

pub fn matrix_to_csv(m: &DataMatrix) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{},{}", m.rows(), m.cols());
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            if c > 0 {
                out.push(',');
            }
            format_value(m.get(r, c), &mut out);
        }
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<DataMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        column: 1,
        message: "empty file".into(),
    })?;
    let dims: Vec<&str> = header.split(',').map(str::trim).collect();
    let parse_dim = |s: &str, column: usize| -> Result<usize> {
        s.parse::<usize>().map_err(|_| Error::Parse {
            line: hline + 1,
            column,
            message: format!("expected a dimension in the `rows,cols` header, found `{s}`"),
        })
    };
    if dims.len() != 2 {
        return Err(Error::Parse {
            line: hline + 1,
            column: 1,
            message: format!("header must be `rows,cols`, found `{header}`"),
        });
    }
    let rows = parse_dim(dims[0], 1)?;
    let cols = parse_dim(dims[1], 2)?;

    let mut values = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0;
    for (lineno, line) in lines {
        seen_rows += 1;
        if seen_rows > rows {
            return Err(Error::Parse {
                line: lineno + 1,
                column: 1,
                message: format!("more than {rows} data rows"),
            });
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(Error::Parse {
                line: lineno + 1,
                column: fields.len().min(cols) + 1,
                message: format!("expected {cols} values, found {}", fields.len()),
            });
        }
        for (c, f) in fields.iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                column: c + 1,
                message: format!("`{}` is not a number", f.trim()),
            })?;
            values.push(v);
        }
    }
    if seen_rows != rows {
        return Err(Error::Parse {
            line: hline + 2 + seen_rows,
            column: 1,
            message: format!("expected {rows} data rows, found {seen_rows}"),
        });
    }
    DataMatrix::from_row_major(rows, cols, &values)
}

pub fn matrix_to_rawbin(m: &DataMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * m.rows() * m.cols());
    out.extend_from_slice(RAWBIN_MAGIC);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.to_row_major() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn matrix_from_rawbin(bytes: &[u8]) -> Result<DataMatrix> {
    let err = |message: String| Error::Parse {
        line: 0,
        column: 0,
        message,
    };
    if bytes.len() < 24 {
        return Err(err(format!(
            "{} bytes is too short for a header",
            bytes.len()
        )));
    }
    if &bytes[..8] != RAWBIN_MAGIC {
        return Err(err("bad magic, expected RBDSMAT0".into()));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| err(format!("dimensions {rows}x{cols} overflow")))?;
    let body = &bytes[24..];
    if body.len() != expected {
        return Err(err(format!(
            "{rows}x{cols} needs {expected} payload bytes, found {}",
            body.len()
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DataMatrix::from_row_major(rows, cols, &values)
}

pub fn load_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<DataMatrix> {
    let path = path.as_ref();
    match format {
        MatrixFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            matrix_from_csv(&text)
        }
        MatrixFormat::RawBin => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            matrix_from_rawbin(&bytes)
        }
    }
}

pub fn save_matrix(m: &DataMatrix, path: impl AsRef<Path>, format: MatrixFormat) -> Result<()> {
    let bytes = match format {
        MatrixFormat::Csv => matrix_to_csv(m).into_bytes(),
        MatrixFormat::RawBin => matrix_to_rawbin(m),
    };
    write_atomic(path.as_ref(), &bytes)
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{ext}.tmp"),
        None => "tmp".to_string(),
    });
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<usize>().map_err(|_| Error::Parse {
                line: i + 1,
                column: 1,
                message: format!("`{}` is not a class id", l.trim()),
            })
        })
        .collect()
}

pub fn save_labels(labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        let _ = writeln!(out, "{l}");
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

pub fn load_dataset(
    data: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    format: MatrixFormat,
) -> Result<LabeledDataset> {
    LabeledDataset::new(load_matrix(data, format)?, load_labels(labels)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_parses_simple_matrix() {
        let m = matrix_from_csv("2,2\n1,2\n3,4\n").unwrap();
        assert_eq!(m.to_row_major(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        assert!(matches!(matrix_from_csv(""), Err(Error::Parse { .. })));
        assert!(matches!(matrix_from_rawbin(&[]), Err(Error::Parse { .. })));
    }

    #[test]
    fn parse_error_names_row_and_column() {
        match matrix_from_csv("2,2\n1,2\n3,x\n") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            matrix_from_csv("2,2\n1,2\n3\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            matrix_from_csv("3,2\n1,2\n3,4\n"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn non_finite_values_fail_validation() {
        assert!(matches!(
            matrix_from_csv("1,2\n1,NaN\n"),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            matrix_from_csv("1,2\ninf,1\n"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn identity_csv_has_three_data_lines() {
        let text = matrix_to_csv(&DataMatrix::identity(3).unwrap());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines, vec!["3,3", "1,0,0", "0,1,0", "0,0,1"]);
    }

    #[test]
    fn empty_shapes_are_rejected() {
        assert!(DataMatrix::new(DMatrix::zeros(0, 4)).is_err());
        assert!(DataMatrix::from_row_major(2, 0, &[]).is_err());
    }

    #[test]
    fn rawbin_layout_is_row_major_little_endian() {
        let m = DataMatrix::from_row_major(1, 2, &[1.5, -2.0]).unwrap();
        let bytes = matrix_to_rawbin(&m);
        assert_eq!(&bytes[..8], b"RBDSMAT0");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), 1.5);
        assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), -2.0);
        assert!(matrix_from_rawbin(&bytes[..39]).is_err());
    }

    #[test]
    fn one_hot_examples() {
        let ds = LabeledDataset::new(
            DataMatrix::from_row_major(1, 3, &[0.0, 1.0, 2.0]).unwrap(),
            vec![1, 2, 1],
        )
        .unwrap();
        let h = one_hot(&ds);
        assert_eq!(
            h.as_matrix(),
            &DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0])
        );

        let single = LabeledDataset::new(
            DataMatrix::from_row_major(1, 3, &[0.0, 1.0, 2.0]).unwrap(),
            vec![1, 1, 1],
        )
        .unwrap();
        assert_eq!(
            one_hot(&single).as_matrix(),
            &DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0])
        );
    }

    #[test]
    fn dataset_rejects_missing_classes() {
        let data = DataMatrix::from_row_major(1, 2, &[0.0, 1.0]).unwrap();
        assert!(LabeledDataset::new(data.clone(), vec![1, 3]).is_err());
        assert!(LabeledDataset::new(data.clone(), vec![0, 1]).is_err());
        assert!(LabeledDataset::new(data, vec![1]).is_err());
    }
}
