//! Dense symmetric linear algebra on row-major `n x n` buffers.

use crate::error::{HarError, Result};
use crate::scalar::{axpy, dot, norm2, Scalar};

/// Lower Cholesky factor `L` with `A + shift*I = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factor `a + shift*I`, reading only the lower triangle of `a`.
    /// Returns `None` when a pivot is not strictly positive.
    pub fn factor(a: &[T], n: usize, shift: T) -> Option<Self> {
        assert_eq!(a.len(), n * n, "matrix buffer must be n*n");
        let mut l = vec![T::zero(); n * n];
        let pivot_tol = T::epsilon() * T::from_count(n.max(1));
        for i in 0..n {
            let (done, rest) = l.split_at_mut(i * n);
            let row_i = &mut rest[..n];
            for j in 0..i {
                let row_j = &done[j * n..j * n + j];
                let s = a[i * n + j] - dot(&row_i[..j], row_j);
                row_i[j] = s / done[j * n + j];
            }
            let diag = a[i * n + i] + shift;
            let d = diag - dot(&row_i[..i], &row_i[..i]);
            // pivots lost to cancellation count as breakdown
            if !(d > pivot_tol * diag.abs()) || !d.is_finite() {
                return None;
            }
            row_i[i] = d.sqrt();
        }
        Some(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.l[i * self.n + j]
    }

    /// Solve `(A + shift*I) x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut z = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            z[i] = (z[i] - dot(row, &z[..i])) / self.at(i, i);
        }
        for i in (0..n).rev() {
            z[i] /= self.at(i, i);
            let xi = z[i];
            let row = &self.l[i * n..i * n + i];
            axpy(-xi, row, &mut z[..i]);
        }
        z
    }

    /// Diagonal of `(A + shift*I)^{-1}` computed from the factor as the
    /// column sums of squares of `L^{-1}`.
    pub fn inverse_diagonal(&self) -> Vec<T> {
        let n = self.n;
        let mut w = vec![T::zero(); n * n];
        let mut diag = vec![T::zero(); n];
        let mut tmp = vec![T::zero(); n];
        for i in 0..n {
            let tmp = &mut tmp[..=i];
            tmp.fill(T::zero());
            tmp[i] = T::one();
            let row = &self.l[i * n..i * n + i];
            for (k, &lik) in row.iter().enumerate() {
                if lik != T::zero() {
                    axpy(-lik, &w[k * n..k * n + k + 1], &mut tmp[..=k]);
                }
            }
            let inv = T::one() / self.at(i, i);
            for (c, v) in tmp.iter_mut().enumerate() {
                *v *= inv;
                diag[c] += *v * *v;
            }
            w[i * n..=i * n + i].copy_from_slice(tmp);
        }
        diag
    }
}

pub fn matvec<T: Scalar>(a: &[T], n: usize, x: &[T]) -> Vec<T> {
    a.chunks_exact(n).map(|row| dot(row, x)).collect()
}

pub fn trace<T: Scalar>(a: &[T], n: usize) -> T {
    (0..n).map(|i| a[i * n + i]).fold(T::zero(), |s, v| s + v)
}

/// Number of escalations after the first jittered attempt.
const JITTER_ESCALATIONS: i32 = 3;

/// Base jitter `1e-12 * trace(K) / n`, or `1e-12` for a zero trace.
pub fn base_jitter<T: Scalar>(a: &[T], n: usize) -> T {
    let t = trace(a, n) / T::from_count(n.max(1));
    let scale = if t > T::zero() && t.is_finite() { t } else { T::one() };
    T::lit(1e-12) * scale
}

/// Factor `K + lambda*I`. If that fails, retry with additive jitter
/// `j0, 10 j0, 100 j0, 1000 j0` where `j0 = 1e-12 trace(K)/n`.
///
/// Returns the factor and the jitter that was added on top of `lambda`.
pub fn factor_with_jitter<T: Scalar>(a: &[T], n: usize, lambda: T) -> Result<(Cholesky<T>, T)> {
    if let Some(c) = Cholesky::factor(a, n, lambda) {
        return Ok((c, T::zero()));
    }
    let j0 = base_jitter(a, n);
    let mut jitter = j0;
    for _ in 0..=JITTER_ESCALATIONS {
        if let Some(c) = Cholesky::factor(a, n, lambda + jitter) {
            log::debug!("cholesky needed diagonal jitter {jitter}");
            return Ok((c, jitter));
        }
        jitter *= T::lit(10.0);
    }
    Err(HarError::SingularSystem {
        jitter: (jitter / T::lit(10.0)).to_f64_lossy(),
    })
}

pub const EIG_MAX_ITERS: usize = 200;
pub const EIG_REL_TOL: f64 = 1e-6;

/// Smallest eigenvalue of a symmetric positive semidefinite matrix by inverse
/// iteration on a (possibly jittered) Cholesky factor.
///
/// The estimate is the Rayleigh quotient of the unshifted matrix. If the
/// factorization fails or the quotient has not settled to `EIG_REL_TOL`
/// within `EIG_MAX_ITERS` steps the result is `0`.
pub fn smallest_eigenvalue<T: Scalar>(a: &[T], n: usize) -> T {
    let Ok((chol, _)) = factor_with_jitter(a, n, T::zero()) else {
        return T::zero();
    };
    let floor = base_jitter(a, n);
    let mut v: Vec<T> = (0..n)
        .map(|i| T::lit(0.5 + ((i * 7919 + 13) % 1000) as f64 / 1000.0))
        .collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut prev = dot(&v, &matvec(a, n, &v));
    for _ in 0..EIG_MAX_ITERS {
        let mut w = chol.solve(&v);
        let nw = norm2(&w);
        if !(nw > T::zero()) || !nw.is_finite() {
            return T::zero();
        }
        w.iter_mut().for_each(|x| *x /= nw);
        let rho = dot(&w, &matvec(a, n, &w));
        v = w;
        if (rho - prev).abs() <= T::lit(EIG_REL_TOL) * rho.abs().max(floor) {
            return rho;
        }
        prev = rho;
    }
    T::zero()
}
