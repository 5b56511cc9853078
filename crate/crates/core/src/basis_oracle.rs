//! Explicit HAR basis expansion at small scale.
//!
//! This is the brute-force counterpart of the kernels: it materializes every
//! basis function `h_{i, s}` so kernel values can be checked as inner products
//! of expansion vectors, and ridge fits can be computed in the primal.
//!
//! A basis function of order `t` is indexed by a knot `i` and a nested chain
//! of sections `s_t ⊆ ... ⊆ s_0 ⊆ {1..p}`. The chain is encoded per coordinate
//! as a shell label in `0..=t+1`:
//!
//! * `0`: `j ∉ s_0`, factor `1`
//! * `tau` in `1..=t`: `j ∈ s_{tau-1} \ s_tau`, factor `x_j^tau / tau!`
//! * `t+1`: `j ∈ s_t`, factor `(x_j - X_ij)_+^t / t!`
//!
//! For `t = 0` the label is just membership in the section `s`.

use nalgebra::{DMatrix, DVector};

use crate::error::{HarError, Result};
use crate::kernels::factorial;
use crate::matrix::DesignMatrix;

pub const MAX_ORACLE_KNOTS: usize = 16;
pub const MAX_ORACLE_DIM: usize = 6;
pub const MAX_ORACLE_ORDER: u32 = 2;
/// Largest primal system the ridge oracle will factor.
pub const MAX_PRIMAL_BASES: usize = 4096;

/// One basis function: knot row and the shell label of every coordinate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisIndex {
    pub knot: usize,
    pub shells: Vec<u8>,
}

impl BasisIndex {
    /// For order 0, the section as a bitmask (bit `j` set when `j ∈ s`).
    pub fn section_mask(&self) -> u64 {
        self.shells
            .iter()
            .enumerate()
            .filter(|(_, &s)| s != 0)
            .fold(0, |m, (j, _)| m | (1 << j))
    }
}

#[derive(Debug, Clone)]
pub struct BasisExpansion {
    pub values: Vec<f64>,
    pub index: Vec<BasisIndex>,
}

impl BasisExpansion {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dot(&self, other: &BasisExpansion) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

/// `n (2 + t)^p`, the number of bases generated by `n` knots.
pub fn basis_count(n: usize, p: usize, order: u32) -> usize {
    n * (2 + order as usize).pow(p as u32)
}

fn check_scale(knots: &DesignMatrix<f64>, order: u32) -> Result<()> {
    if knots.nrows() > MAX_ORACLE_KNOTS || knots.ncols() > MAX_ORACLE_DIM || order > MAX_ORACLE_ORDER {
        return Err(HarError::Unsupported(format!(
            "basis oracle is limited to n <= {MAX_ORACLE_KNOTS}, p <= {MAX_ORACLE_DIM}, t <= {MAX_ORACLE_ORDER}; \
             got n = {}, p = {}, t = {order}",
            knots.nrows(),
            knots.ncols()
        )));
    }
    knots.check_unit_cube()
}

/// Shell label vectors in mixed-radix counter order, coordinate 0 fastest.
fn shell_labels(p: usize, order: u32) -> Vec<Vec<u8>> {
    let radix = order as usize + 2;
    let total = radix.pow(p as u32);
    (0..total)
        .map(|mut code| {
            (0..p)
                .map(|_| {
                    let s = (code % radix) as u8;
                    code /= radix;
                    s
                })
                .collect()
        })
        .collect()
}

fn basis_value(x: &[f64], knot: &[f64], shells: &[u8], order: u32) -> f64 {
    let top = order as u8 + 1;
    let mut v = 1.0;
    for j in 0..x.len() {
        let s = shells[j];
        v *= if s == 0 {
            1.0
        } else if s == top {
            let u = x[j] - knot[j];
            if u >= 0.0 {
                u.powi(order as i32) / factorial::<f64>(order)
            } else {
                0.0
            }
        } else {
            x[j].powi(s as i32) / factorial::<f64>(s as u32)
        };
    }
    v
}

/// Every basis function evaluated at `x`, knots in row order and sections in
/// counter order within each knot.
pub fn expand(x: &[f64], knots: &DesignMatrix<f64>, order: u32) -> Result<BasisExpansion> {
    check_scale(knots, order)?;
    if x.len() != knots.ncols() {
        return Err(HarError::DimensionMismatch {
            expected: knots.ncols(),
            found: x.len(),
        });
    }
    crate::matrix::check_unit_cube(x, x.len())?;
    let labels = shell_labels(knots.ncols(), order);
    let mut values = Vec::with_capacity(knots.nrows() * labels.len());
    let mut index = Vec::with_capacity(values.capacity());
    for (i, knot) in knots.rows_iter().enumerate() {
        for shells in &labels {
            values.push(basis_value(x, knot, shells, order));
            index.push(BasisIndex {
                knot: i,
                shells: shells.clone(),
            });
        }
    }
    Ok(BasisExpansion { values, index })
}

/// Primal ridge fit over the explicit basis.
#[derive(Debug, Clone)]
pub struct PrimalRidge {
    knots: DesignMatrix<f64>,
    order: u32,
    pub beta: Vec<f64>,
}

impl PrimalRidge {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let h = expand(x, &self.knots, self.order)?;
        Ok(h.values.iter().zip(&self.beta).map(|(a, b)| a * b).sum())
    }
}

/// `beta = (Phi^T Phi + lambda I_d)^{-1} Phi^T y` where row `i` of `Phi` is the
/// expansion of training row `i`.
pub fn explicit_ridge_fit(knots: &DesignMatrix<f64>, y: &[f64], order: u32, lambda: f64) -> Result<PrimalRidge> {
    check_scale(knots, order)?;
    if y.len() != knots.nrows() {
        return Err(HarError::DimensionMismatch {
            expected: knots.nrows(),
            found: y.len(),
        });
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(HarError::Unsupported(format!(
            "primal ridge needs a positive penalty (d > n makes lambda = 0 singular), got {lambda}"
        )));
    }
    let d = basis_count(knots.nrows(), knots.ncols(), order);
    if d > MAX_PRIMAL_BASES {
        return Err(HarError::Unsupported(format!(
            "primal system of {d} bases exceeds {MAX_PRIMAL_BASES}"
        )));
    }
    let n = knots.nrows();
    let mut phi = DMatrix::<f64>::zeros(n, d);
    for (i, row) in knots.rows_iter().enumerate() {
        let h = expand(row, knots, order)?;
        for (k, v) in h.values.into_iter().enumerate() {
            phi[(i, k)] = v;
        }
    }
    let mut a = phi.transpose() * &phi;
    for k in 0..d {
        a[(k, k)] += lambda;
    }
    let rhs = phi.transpose() * DVector::from_column_slice(y);
    let chol = a
        .cholesky()
        .ok_or(HarError::SingularSystem { jitter: 0.0 })?;
    let beta = chol.solve(&rhs);
    Ok(PrimalRidge {
        knots: knots.clone(),
        order,
        beta: beta.iter().copied().collect(),
    })
}
