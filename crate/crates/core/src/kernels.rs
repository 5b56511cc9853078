//! Kernel evaluation for the HAR (any order), mixed Sobolev, and Gaussian RBF
//! families, plus Gram and cross-kernel matrix construction.
//!
//! The order-0 HAR kernel is `K(x, x') = sum_i 2^{|s_i(x, x')|}` where
//! `s_i(x, x') = { j : X_ij <= min(x_j, x'_j) }` and the `X_i` are the training
//! rows (knots). For order `t >= 1` it is the product form
//!
//! ```text
//! sum_i prod_j [ (x_j - X_ij)_+^t (x'_j - X_ij)_+^t / t!^2
//!               + sum_{tau=1..t} (x_j x'_j)^tau / tau!^2 + 1 ]
//! ```
//!
//! which reduces to the order-0 sum when `t = 0` with `(u)_+^0 = 1(u >= 0)`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarError, Result};
use crate::matrix::{check_unit_cube, DesignMatrix};
use crate::scalar::Scalar;

/// Highest supported HAR order; factorials are tabulated up to here.
pub const MAX_HAR_ORDER: u32 = 12;

/// Kernel family together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", bound = "T: Scalar")]
pub enum KernelSpec<T> {
    /// Highly adaptive ridge kernel of spline order `order`, with knots at the
    /// training rows.
    Har { order: u32 },
    MixedSobolev,
    /// `exp(-|x - x'|^2 / (2 bandwidth^2))`
    Rbf { bandwidth: T },
}

impl<T: Scalar> KernelSpec<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Har { order } => check_order(order),
            KernelSpec::MixedSobolev => Ok(()),
            KernelSpec::Rbf { bandwidth } => check_bandwidth(bandwidth),
        }
    }

    pub fn family(&self) -> KernelFamily {
        match *self {
            KernelSpec::Har { order } => KernelFamily::Har { order },
            KernelSpec::MixedSobolev => KernelFamily::MixedSobolev,
            KernelSpec::Rbf { .. } => KernelFamily::Rbf,
        }
    }

    /// Whether inputs must lie in the unit cube.
    pub fn needs_unit_cube(&self) -> bool {
        !matches!(self, KernelSpec::Rbf { .. })
    }
}

impl<T: Scalar> fmt::Display for KernelSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Har { order } => write!(f, "har(order={order})"),
            KernelSpec::MixedSobolev => write!(f, "mixed_sobolev"),
            KernelSpec::Rbf { bandwidth } => write!(f, "rbf(bandwidth={bandwidth})"),
        }
    }
}

/// Kernel family without the tunable RBF bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    Har { order: u32 },
    MixedSobolev,
    Rbf,
}

impl KernelFamily {
    pub fn label(&self) -> String {
        match self {
            KernelFamily::Har { order: 0 } => "har".to_string(),
            KernelFamily::Har { order } => format!("har{order}"),
            KernelFamily::MixedSobolev => "mixed_sobolev".to_string(),
            KernelFamily::Rbf => "rbf".to_string(),
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn check_order(order: u32) -> Result<()> {
    if order > MAX_HAR_ORDER {
        return Err(HarError::Unsupported(format!(
            "HAR order {order} exceeds the maximum of {MAX_HAR_ORDER}"
        )));
    }
    Ok(())
}

fn check_bandwidth<T: Scalar>(bandwidth: T) -> Result<()> {
    if !(bandwidth > T::zero()) || !bandwidth.is_finite() {
        return Err(HarError::param(
            "bandwidth",
            format!("must be finite and positive, got {bandwidth}"),
        ));
    }
    Ok(())
}

fn check_pair<T: Scalar>(x: &[T], x_prime: &[T]) -> Result<()> {
    if x.len() != x_prime.len() {
        return Err(HarError::DimensionMismatch {
            expected: x.len(),
            found: x_prime.len(),
        });
    }
    if x.is_empty() {
        return Err(HarError::InvalidInput("zero-dimensional input".into()));
    }
    if x.iter().chain(x_prime).any(|v| v.is_nan()) {
        return Err(HarError::InvalidInput("NaN in kernel argument".into()));
    }
    Ok(())
}

fn check_cube_pair<T: Scalar>(x: &[T], x_prime: &[T]) -> Result<()> {
    check_unit_cube(x, x.len())?;
    check_unit_cube(x_prime, x_prime.len())
}

fn check_har_inputs<T: Scalar>(x: &[T], x_prime: &[T], knots: &DesignMatrix<T>) -> Result<()> {
    check_pair(x, x_prime)?;
    if knots.ncols() != x.len() {
        return Err(HarError::DimensionMismatch {
            expected: knots.ncols(),
            found: x.len(),
        });
    }
    check_cube_pair(x, x_prime)?;
    knots.check_unit_cube()
}

/// `t!` for `t <= MAX_HAR_ORDER`.
pub fn factorial<T: Scalar>(t: u32) -> T {
    (1..=t).fold(T::one(), |acc, k| acc * T::from_count(k as usize))
}

/// `(u)_+^t` with the convention `(u)_+^0 = 1(u >= 0)`.
#[inline]
fn positive_power<T: Scalar>(u: T, t: u32) -> T {
    if u >= T::zero() {
        u.powi(t as i32)
    } else {
        T::zero()
    }
}

/// `2^c` for `c = 0..=p`, exact in floating point.
fn powers_of_two<T: Scalar>(p: usize) -> Vec<T> {
    let two = T::lit(2.0);
    let mut out = Vec::with_capacity(p + 1);
    let mut v = T::one();
    for _ in 0..=p {
        out.push(v);
        v *= two;
    }
    out
}

/// HAR kernel at `(x, x')` with knots at the rows of `knots`.
///
/// Order 0 uses the counting form `sum_i 2^{|s_i|}`; higher orders use the
/// per-knot product form.
pub fn har_kernel<T: Scalar>(x: &[T], x_prime: &[T], knots: &DesignMatrix<T>, order: u32) -> Result<T> {
    if order == 0 {
        har0_kernel_sum(x, x_prime, knots)
    } else {
        har_kernel_product(x, x_prime, knots, order)
    }
}

/// Order-0 HAR kernel by counting: `sum_i 2^{|{j : X_ij <= min(x_j, x'_j)}|}`.
pub fn har0_kernel_sum<T: Scalar>(x: &[T], x_prime: &[T], knots: &DesignMatrix<T>) -> Result<T> {
    check_har_inputs(x, x_prime, knots)?;
    let pow2 = powers_of_two::<T>(x.len());
    let lo: Vec<T> = x.iter().zip(x_prime).map(|(&a, &b)| a.min(b)).collect();
    let mut sum = T::zero();
    for knot in knots.rows_iter() {
        let c = knot.iter().zip(&lo).filter(|(k, m)| *k <= *m).count();
        sum += pow2[c];
    }
    Ok(sum)
}

/// HAR kernel of any order through the per-knot product formula.
pub fn har_kernel_product<T: Scalar>(
    x: &[T],
    x_prime: &[T],
    knots: &DesignMatrix<T>,
    order: u32,
) -> Result<T> {
    check_order(order)?;
    check_har_inputs(x, x_prime, knots)?;
    let eval = HarProduct::new(order);
    let shells = eval.shells(x, x_prime);
    Ok(knots
        .rows_iter()
        .fold(T::zero(), |acc, knot| acc + eval.knot_term(x, x_prime, knot, &shells)))
}

/// Mixed Sobolev kernel `prod_j cosh(min) cosh(1 - max) / sinh(1)`.
pub fn mixed_sobolev_kernel<T: Scalar>(x: &[T], x_prime: &[T]) -> Result<T> {
    check_pair(x, x_prime)?;
    check_cube_pair(x, x_prime)?;
    Ok(sobolev_unchecked(x, x_prime, T::one().sinh()))
}

#[inline]
fn sobolev_unchecked<T: Scalar>(x: &[T], x_prime: &[T], sinh1: T) -> T {
    x.iter().zip(x_prime).fold(T::one(), |acc, (&a, &b)| {
        acc * (a.min(b).cosh() * (T::one() - a.max(b)).cosh() / sinh1)
    })
}

/// Gaussian kernel `exp(-|x - x'|^2 / (2 bandwidth^2))`.
pub fn rbf_kernel<T: Scalar>(x: &[T], x_prime: &[T], bandwidth: T) -> Result<T> {
    check_bandwidth(bandwidth)?;
    check_pair(x, x_prime)?;
    Ok(rbf_unchecked(x, x_prime, rbf_scale(bandwidth)))
}

#[inline]
fn rbf_scale<T: Scalar>(bandwidth: T) -> T {
    T::one() / (T::lit(2.0) * bandwidth * bandwidth)
}

#[inline]
fn rbf_unchecked<T: Scalar>(x: &[T], x_prime: &[T], scale: T) -> T {
    let d2 = x.iter().zip(x_prime).fold(T::zero(), |acc, (&a, &b)| {
        let d = a - b;
        acc + d * d
    });
    (-d2 * scale).exp()
}

struct HarProduct<T> {
    order: u32,
    /// `1 / t!^2`
    trunc_scale: T,
    /// `1 / tau!^2` for `tau = 1..=t`
    shell_scale: Vec<T>,
}

impl<T: Scalar> HarProduct<T> {
    fn new(order: u32) -> Self {
        let f = factorial::<T>(order);
        Self {
            order,
            trunc_scale: T::one() / (f * f),
            shell_scale: (1..=order)
                .map(|tau| {
                    let f = factorial::<T>(tau);
                    T::one() / (f * f)
                })
                .collect(),
        }
    }

    /// Knot-independent part `sum_{tau=1..t} (x_j x'_j)^tau / tau!^2 + 1` per coordinate.
    fn shells(&self, x: &[T], x_prime: &[T]) -> Vec<T> {
        x.iter()
            .zip(x_prime)
            .map(|(&a, &b)| {
                let prod = a * b;
                let mut pw = T::one();
                let mut s = T::zero();
                for &scale in &self.shell_scale {
                    pw *= prod;
                    s += pw * scale;
                }
                s + T::one()
            })
            .collect()
    }

    #[inline]
    fn knot_term(&self, x: &[T], x_prime: &[T], knot: &[T], shells: &[T]) -> T {
        let mut prod = T::one();
        for j in 0..knot.len() {
            let trunc = positive_power(x[j] - knot[j], self.order)
                * positive_power(x_prime[j] - knot[j], self.order)
                * self.trunc_scale;
            prod *= trunc + shells[j];
        }
        prod
    }
}

/// Precomputed evaluator for kernel rows against a fixed set of knot rows.
pub(crate) struct KernelRows<'a, T: Scalar> {
    knots: &'a DesignMatrix<T>,
    kind: RowKind<T>,
}

enum RowKind<T> {
    /// Order-0 HAR with per-(row, knot) indicator masks of the knot rows.
    Har0 {
        words: usize,
        pow2: Vec<T>,
        masks: Vec<u64>,
    },
    HarProduct(HarProduct<T>),
    Sobolev { sinh1: T },
    Rbf { scale: T },
}

/// Bit `j` is set when `knot_j <= x_j`, for every knot, written to `out`.
#[inline]
fn fill_masks<T: Scalar>(x: &[T], knots: &DesignMatrix<T>, words: usize, out: &mut [u64]) {
    out.fill(0);
    for (i, knot) in knots.rows_iter().enumerate() {
        let m = &mut out[i * words..(i + 1) * words];
        for (j, (&k, &v)) in knot.iter().zip(x).enumerate() {
            if k <= v {
                m[j / 64] |= 1u64 << (j % 64);
            }
        }
    }
}

impl<'a, T: Scalar> KernelRows<'a, T> {
    pub(crate) fn new(knots: &'a DesignMatrix<T>, spec: &KernelSpec<T>) -> Result<Self> {
        spec.validate()?;
        if spec.needs_unit_cube() {
            knots.check_unit_cube()?;
        }
        let n = knots.nrows();
        let p = knots.ncols();
        let kind = match *spec {
            KernelSpec::Har { order: 0 } => {
                let words = p.div_ceil(64);
                let mut masks = vec![0u64; n * n * words];
                masks
                    .par_chunks_mut(n * words)
                    .zip(knots.as_slice().par_chunks(p))
                    .for_each(|(m, row)| fill_masks(row, knots, words, m));
                RowKind::Har0 {
                    words,
                    pow2: powers_of_two(p),
                    masks,
                }
            }
            KernelSpec::Har { order } => RowKind::HarProduct(HarProduct::new(order)),
            KernelSpec::MixedSobolev => RowKind::Sobolev {
                sinh1: T::one().sinh(),
            },
            KernelSpec::Rbf { bandwidth } => RowKind::Rbf {
                scale: rbf_scale(bandwidth),
            },
        };
        Ok(Self { knots, kind })
    }

    pub(crate) fn check_points(&self, points: &DesignMatrix<T>) -> Result<()> {
        if points.ncols() != self.knots.ncols() {
            return Err(HarError::DimensionMismatch {
                expected: self.knots.ncols(),
                found: points.ncols(),
            });
        }
        if !matches!(self.kind, RowKind::Rbf { .. }) {
            points.check_unit_cube()?;
        }
        Ok(())
    }

    /// Kernel between the knot rows `a` and `b` (Gram entry).
    #[inline]
    fn knot_pair(&self, a: usize, b: usize) -> T {
        match &self.kind {
            RowKind::Har0 { words, pow2, masks } => {
                let n = self.knots.nrows();
                let ma = &masks[a * n * words..(a + 1) * n * words];
                let mb = &masks[b * n * words..(b + 1) * n * words];
                har0_from_masks(ma, mb, *words, pow2)
            }
            _ => self.point_pair(self.knots.row(a), self.knots.row(b)),
        }
    }

    #[inline]
    fn point_pair(&self, x: &[T], y: &[T]) -> T {
        match &self.kind {
            RowKind::Har0 { pow2, .. } => {
                let mut sum = T::zero();
                for knot in self.knots.rows_iter() {
                    let c = knot
                        .iter()
                        .zip(x.iter().zip(y))
                        .filter(|(k, (a, b))| **k <= a.min(**b))
                        .count();
                    sum += pow2[c];
                }
                sum
            }
            RowKind::HarProduct(eval) => {
                let shells = eval.shells(x, y);
                self.knots
                    .rows_iter()
                    .fold(T::zero(), |acc, knot| acc + eval.knot_term(x, y, knot, &shells))
            }
            RowKind::Sobolev { sinh1 } => sobolev_unchecked(x, y, *sinh1),
            RowKind::Rbf { scale } => rbf_unchecked(x, y, *scale),
        }
    }

    /// Kernel values between an arbitrary point and every knot row.
    pub(crate) fn row_into(&self, x: &[T], out: &mut [T], scratch: &mut Vec<u64>) {
        let n = self.knots.nrows();
        match &self.kind {
            RowKind::Har0 { words, pow2, masks } => {
                scratch.resize(n * words, 0);
                fill_masks(x, self.knots, *words, scratch);
                for (b, o) in out.iter_mut().enumerate() {
                    let mb = &masks[b * n * words..(b + 1) * n * words];
                    *o = har0_from_masks(scratch, mb, *words, pow2);
                }
            }
            _ => {
                for (b, o) in out.iter_mut().enumerate() {
                    *o = self.point_pair(x, self.knots.row(b));
                }
            }
        }
    }
}

#[inline]
fn har0_from_masks<T: Scalar>(ma: &[u64], mb: &[u64], words: usize, pow2: &[T]) -> T {
    let mut sum = T::zero();
    if words == 1 {
        for (a, b) in ma.iter().zip(mb) {
            sum += pow2[(a & b).count_ones() as usize];
        }
    } else {
        for (a, b) in ma.chunks_exact(words).zip(mb.chunks_exact(words)) {
            let c: u32 = a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum();
            sum += pow2[c as usize];
        }
    }
    sum
}

/// Symmetric `n x n` kernel matrix over the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix<T> {
    n: usize,
    values: Vec<T>,
    spec: KernelSpec<T>,
    knot_fingerprint: String,
}

impl<T: Scalar> GramMatrix<T> {
    /// Wrap an externally computed symmetric matrix.
    pub fn from_values(n: usize, values: Vec<T>, spec: KernelSpec<T>, knot_fingerprint: String) -> Result<Self> {
        if n == 0 || values.len() != n * n {
            return Err(HarError::DimensionMismatch {
                expected: n * n,
                found: values.len(),
            });
        }
        for i in 0..n {
            for j in 0..i {
                if values[i * n + j] != values[j * n + i] {
                    return Err(HarError::InvalidInput(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HarError::InvalidInput("non-finite Gram entry".into()));
        }
        Ok(Self {
            n,
            values,
            spec,
            knot_fingerprint,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn spec(&self) -> &KernelSpec<T> {
        &self.spec
    }

    pub fn knot_fingerprint(&self) -> &str {
        &self.knot_fingerprint
    }
}

/// Gram matrix of `spec` over the rows of `knots` (which are also the HAR knots).
///
/// Rows of the upper triangle are computed in parallel; the lower triangle is
/// then mirrored in a sequential pass so every entry is computed exactly once.
pub fn gram_matrix<T: Scalar>(knots: &DesignMatrix<T>, spec: &KernelSpec<T>) -> Result<GramMatrix<T>> {
    let rows = KernelRows::new(knots, spec)?;
    let n = knots.nrows();
    let upper: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|a| (a..n).map(|b| rows.knot_pair(a, b)).collect())
        .collect();
    let mut values = vec![T::zero(); n * n];
    for (a, row) in upper.iter().enumerate() {
        values[a * n + a..(a + 1) * n].copy_from_slice(row);
    }
    for a in 0..n {
        for b in 0..a {
            values[a * n + b] = values[b * n + a];
        }
    }
    Ok(GramMatrix {
        n,
        values,
        spec: *spec,
        knot_fingerprint: knots.fingerprint(),
    })
}

/// Rectangular `m x n` matrix of kernel values between test rows and knot rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossKernelMatrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> CrossKernelMatrix<T> {
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

pub fn cross_kernel_matrix<T: Scalar>(
    test: &DesignMatrix<T>,
    knots: &DesignMatrix<T>,
    spec: &KernelSpec<T>,
) -> Result<CrossKernelMatrix<T>> {
    let rows = KernelRows::new(knots, spec)?;
    rows.check_points(test)?;
    let n = knots.nrows();
    let mut values = vec![T::zero(); test.nrows() * n];
    values
        .par_chunks_mut(n)
        .zip(test.as_slice().par_chunks(test.ncols()))
        .for_each_init(Vec::new, |scratch, (out, x)| rows.row_into(x, out, scratch));
    Ok(CrossKernelMatrix {
        rows: test.nrows(),
        cols: n,
        values,
    })
}
