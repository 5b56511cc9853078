//! Dense row-major feature matrix.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarError, Result};
use crate::scalar::Scalar;

/// An `n x p` matrix of feature rows stored row-major.
///
/// Construction rejects empty shapes and NaN entries. Unit-cube membership is
/// not enforced here; kernels that need it check with [`DesignMatrix::check_unit_cube`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DesignMatrix<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Scalar> DesignMatrix<T> {
    pub fn new(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(HarError::InvalidInput(format!(
                "design matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(HarError::DimensionMismatch {
                expected: rows * cols,
                found: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| v.is_nan()) {
            return Err(HarError::InvalidInput(format!(
                "NaN at row {}, column {}",
                k / cols,
                k % cols
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n * p);
        for r in rows {
            if r.len() != p {
                return Err(HarError::DimensionMismatch {
                    expected: p,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(n, p, values)
    }

    /// A single-column matrix.
    pub fn column(values: Vec<T>) -> Result<Self> {
        let n = values.len();
        Self::new(n, 1, values)
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.cols + j]
    }

    pub fn rows_iter(&self) -> impl ExactSizeIterator<Item = &[T]> {
        self.values.chunks_exact(self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Rows picked by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self::new(idx.len(), self.cols, values)
    }

    pub fn check_unit_cube(&self) -> Result<()> {
        check_unit_cube(&self.values, self.cols)
    }

    /// SHA-256 over the shape and the IEEE-754 bits of every entry (as f64).
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.rows as u64).to_le_bytes());
        h.update((self.cols as u64).to_le_bytes());
        for v in &self.values {
            h.update(v.to_f64_lossy().to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

pub(crate) fn check_unit_cube<T: Scalar>(values: &[T], cols: usize) -> Result<()> {
    for (k, v) in values.iter().enumerate() {
        if v.is_nan() {
            return Err(HarError::InvalidInput(format!("NaN at flat index {k}")));
        }
        if *v < T::zero() || *v > T::one() {
            return Err(HarError::InvalidInput(format!(
                "entry {v} at row {}, column {} lies outside [0, 1]",
                k / cols.max(1),
                k % cols.max(1)
            )));
        }
    }
    Ok(())
}
