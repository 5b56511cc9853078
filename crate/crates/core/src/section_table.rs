//! Tabulated evaluation of order-0 HAR fits.
//!
//! An order-0 fit is `f(x) = sum_i sum_{s ⊆ a_i(x)} beta_{i,s}` where
//! `a_i(x) = { j : X_ij <= x_j }` and `beta_{i,s} = sum_k alpha_k 1(s ⊆ a_i(X_k))`.
//! Storing the subset sums of `beta` per knot turns each prediction into `n`
//! table lookups instead of an `n x n` kernel row.

use crate::error::{HarError, Result};
use crate::kernels::KernelSpec;
use crate::matrix::DesignMatrix;
use crate::scalar::Scalar;
use crate::solver::FittedModel;

pub const MAX_TABLE_DIM: usize = 20;
pub const MAX_TABLE_ENTRIES: usize = 1 << 27;

#[derive(Debug, Clone)]
pub struct SectionTable<T> {
    knots: DesignMatrix<T>,
    /// `n` tables of `2^p` entries; entry `a` of table `i` is `sum_{s ⊆ a} beta_{i,s}`.
    tables: Vec<T>,
}

#[inline]
fn mask<T: Scalar>(knot: &[T], x: &[T]) -> usize {
    knot.iter()
        .zip(x)
        .enumerate()
        .fold(0, |m, (j, (&k, &v))| if k <= v { m | (1 << j) } else { m })
}

impl<T: Scalar> SectionTable<T> {
    pub fn from_model(model: &FittedModel<T>) -> Result<Self> {
        if model.spec != (KernelSpec::Har { order: 0 }) {
            return Err(HarError::Unsupported(format!(
                "section tables exist only for order-0 HAR, not {}",
                model.spec
            )));
        }
        let knots = &model.knots;
        let (n, p) = (knots.nrows(), knots.ncols());
        if p > MAX_TABLE_DIM || n.saturating_mul(1 << p) > MAX_TABLE_ENTRIES {
            return Err(HarError::Unsupported(format!(
                "section table for n = {n}, p = {p} is too large"
            )));
        }
        let size = 1usize << p;
        let mut tables = vec![T::zero(); n * size];
        for (i, table) in tables.chunks_exact_mut(size).enumerate() {
            let knot = knots.row(i);
            for (k, row) in knots.rows_iter().enumerate() {
                table[mask(knot, row)] += model.alpha[k];
            }
            // superset sums give beta_{i,s}
            for b in 0..p {
                let bit = 1 << b;
                for m in 0..size {
                    if m & bit == 0 {
                        table[m] += table[m | bit];
                    }
                }
            }
            // subset sums of beta
            for b in 0..p {
                let bit = 1 << b;
                for m in 0..size {
                    if m & bit != 0 {
                        table[m] += table[m ^ bit];
                    }
                }
            }
        }
        Ok(Self {
            knots: knots.clone(),
            tables,
        })
    }

    pub fn predict(&self, test: &DesignMatrix<T>) -> Result<Vec<T>> {
        if test.ncols() != self.knots.ncols() {
            return Err(HarError::DimensionMismatch {
                expected: self.knots.ncols(),
                found: test.ncols(),
            });
        }
        test.check_unit_cube()?;
        let size = 1usize << self.knots.ncols();
        Ok(test
            .rows_iter()
            .map(|x| {
                self.knots
                    .rows_iter()
                    .zip(self.tables.chunks_exact(size))
                    .fold(T::zero(), |acc, (knot, table)| acc + table[mask(knot, x)])
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::fit;

    #[test]
    fn matches_dual_predictions() {
        let rows: Vec<Vec<f64>> = (0..9)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.37) % 1.0, (t * 0.61 + 0.2) % 1.0, (t * 0.13 + 0.5) % 1.0]
            })
            .collect();
        let knots = DesignMatrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = (0..9).map(|i| (i as f64).cos()).collect();
        let model = fit(&knots, &y, &KernelSpec::Har { order: 0 }, 0.3).unwrap();
        let table = SectionTable::from_model(&model).unwrap();
        let test = DesignMatrix::from_rows(&[vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0], vec![0.45, 0.7, 0.2]]).unwrap();
        let a = model.predict(&test).unwrap();
        let b = table.predict(&test).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0), "{u} vs {v}");
        }
    }

    #[test]
    fn rejects_other_kernels() {
        let knots = DesignMatrix::column(vec![0.2, 0.8]).unwrap();
        let model = fit(&knots, &[1.0, 2.0], &KernelSpec::MixedSobolev, 0.1).unwrap();
        assert!(SectionTable::from_model(&model).is_err());
    }
}
