//! Dual-form kernel ridge regression: fitting, prediction, closed-form
//! leave-one-out residuals, the regularization ceiling `lambda_0`, and
//! grid-search model selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{apply_scaling, ScalingParams};
use crate::error::{HarError, Result};
use crate::kernels::{gram_matrix, GramMatrix, KernelFamily, KernelRows, KernelSpec};
use crate::linalg::{factor_with_jitter, matvec, smallest_eigenvalue};
use crate::matrix::DesignMatrix;
use crate::scalar::{dot, norm2, Scalar};

/// Outcome scale cached with a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct YStats<T> {
    pub max_abs: T,
    pub l2_norm: T,
}

impl<T: Scalar> YStats<T> {
    pub fn of(y: &[T]) -> Self {
        Self {
            max_abs: y.iter().fold(T::zero(), |m, v| m.max(v.abs())),
            l2_norm: norm2(y),
        }
    }
}

/// A kernel ridge fit in dual form: predictions are `k(x)^T alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel<T: Scalar> {
    pub knots: DesignMatrix<T>,
    /// Feature scaling applied to raw inputs before kernel evaluation, if any.
    pub scaling: Option<ScalingParams<T>>,
    pub spec: KernelSpec<T>,
    pub lambda: T,
    /// Extra diagonal added when `K + lambda I` was numerically singular.
    pub jitter: T,
    pub alpha: Vec<T>,
    pub y_stats: YStats<T>,
    pub knot_fingerprint: String,
}

impl<T: Scalar> FittedModel<T> {
    pub fn with_scaling(mut self, scaling: ScalingParams<T>) -> Self {
        self.scaling = Some(scaling);
        self
    }

    /// Predictions at already scaled rows.
    pub fn predict(&self, test: &DesignMatrix<T>) -> Result<Vec<T>> {
        predict(self, test)
    }

    /// Predictions at raw rows, scaled first when the model carries scaling.
    pub fn predict_raw(&self, features: &DesignMatrix<T>) -> Result<Vec<T>> {
        match &self.scaling {
            Some(s) => predict(self, &apply_scaling(s, features)?),
            None => predict(self, features),
        }
    }

    /// `|(K + (lambda + jitter) I) alpha - y|_2`.
    pub fn residual_norm(&self, gram: &GramMatrix<T>, y: &[T]) -> T {
        let shift = self.lambda + self.jitter;
        let mut r = matvec(gram.values(), gram.n(), &self.alpha);
        for ((ri, &ai), &yi) in r.iter_mut().zip(&self.alpha).zip(y) {
            *ri = *ri + shift * ai - yi;
        }
        norm2(&r)
    }
}

fn check_y<T: Scalar>(n: usize, y: &[T]) -> Result<()> {
    if y.len() != n {
        return Err(HarError::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(HarError::InvalidInput("non-finite outcome".into()));
    }
    Ok(())
}

fn check_lambda<T: Scalar>(lambda: T, strictly_positive: bool) -> Result<()> {
    let ok = lambda.is_finite() && if strictly_positive { lambda > T::zero() } else { lambda >= T::zero() };
    if !ok {
        let want = if strictly_positive { "positive" } else { "non-negative" };
        return Err(HarError::param("lambda", format!("must be finite and {want}, got {lambda}")));
    }
    Ok(())
}

const REFINEMENT_STEPS: usize = 2;

/// Fit dual coefficients `alpha = (K + lambda I)^{-1} y`.
pub fn fit<T: Scalar>(knots: &DesignMatrix<T>, y: &[T], spec: &KernelSpec<T>, lambda: T) -> Result<FittedModel<T>> {
    check_y(knots.nrows(), y)?;
    check_lambda(lambda, false)?;
    let gram = gram_matrix(knots, spec)?;
    fit_with_gram(knots, &gram, y, lambda)
}

/// Same as [`fit`] with a precomputed Gram matrix of `knots`.
pub fn fit_with_gram<T: Scalar>(
    knots: &DesignMatrix<T>,
    gram: &GramMatrix<T>,
    y: &[T],
    lambda: T,
) -> Result<FittedModel<T>> {
    check_y(knots.nrows(), y)?;
    check_lambda(lambda, false)?;
    if gram.n() != knots.nrows() {
        return Err(HarError::DimensionMismatch {
            expected: knots.nrows(),
            found: gram.n(),
        });
    }
    let n = gram.n();
    let (chol, jitter) = factor_with_jitter(gram.values(), n, lambda)?;
    let shift = lambda + jitter;
    let mut alpha = chol.solve(y);
    let target = T::lit(1e-12) * norm2(y);
    for _ in 0..REFINEMENT_STEPS {
        let mut r = matvec(gram.values(), n, &alpha);
        for ((ri, &ai), &yi) in r.iter_mut().zip(&alpha).zip(y) {
            *ri = yi - (*ri + shift * ai);
        }
        if norm2(&r) <= target {
            break;
        }
        let delta = chol.solve(&r);
        alpha.iter_mut().zip(&delta).for_each(|(a, d)| *a += *d);
    }
    Ok(FittedModel {
        knots: knots.clone(),
        scaling: None,
        spec: *gram.spec(),
        lambda,
        jitter,
        alpha,
        y_stats: YStats::of(y),
        knot_fingerprint: gram.knot_fingerprint().to_string(),
    })
}

/// Predictions `k(x_i)^T alpha` for every row of `test`, one kernel row at a time.
pub fn predict<T: Scalar>(model: &FittedModel<T>, test: &DesignMatrix<T>) -> Result<Vec<T>> {
    let rows = KernelRows::new(&model.knots, &model.spec)?;
    rows.check_points(test)?;
    let n = model.knots.nrows();
    let mut out = vec![T::zero(); test.nrows()];
    out.par_iter_mut()
        .zip(test.as_slice().par_chunks(test.ncols()))
        .for_each_init(
            || (vec![T::zero(); n], Vec::new()),
            |(krow, scratch), (o, x)| {
                rows.row_into(x, krow, scratch);
                *o = dot(krow, &model.alpha);
            },
        );
    Ok(out)
}

/// Closed-form leave-one-out residuals `e_i = alpha_i / [(K + lambda I)^{-1}]_ii`.
///
/// The kernel (and hence the HAR knot set) is held fixed across folds.
pub fn loocv_errors<T: Scalar>(gram: &GramMatrix<T>, y: &[T], lambda: T) -> Result<Vec<T>> {
    check_y(gram.n(), y)?;
    check_lambda(lambda, true)?;
    let (chol, _) = factor_with_jitter(gram.values(), gram.n(), lambda)?;
    let alpha = chol.solve(y);
    let diag = chol.inverse_diagonal();
    Ok(alpha.iter().zip(&diag).map(|(&a, &d)| a / d).collect())
}

/// Mean squared leave-one-out residual.
pub fn loocv_score<T: Scalar>(gram: &GramMatrix<T>, y: &[T], lambda: T) -> Result<T> {
    let e = loocv_errors(gram, y, lambda)?;
    Ok(e.iter().fold(T::zero(), |s, &v| s + v * v) / T::from_count(e.len()))
}

/// Regularization level above which every training prediction is at most
/// `epsilon * max_i |y_i|`:
///
/// `lambda_0 = max_i |K_i|_2 |Y|_2 / (epsilon max_i |y_i|) - eig_min(K)`.
pub fn lambda_max<T: Scalar>(gram: &GramMatrix<T>, y: &[T], epsilon: T) -> Result<T> {
    check_y(gram.n(), y)?;
    if !(epsilon > T::zero() && epsilon < T::one()) {
        return Err(HarError::param("epsilon", format!("must lie in (0, 1), got {epsilon}")));
    }
    let stats = YStats::of(y);
    if stats.max_abs == T::zero() {
        return Err(HarError::UndefinedScale);
    }
    let n = gram.n();
    let row_norm = (0..n).map(|i| norm2(gram.row(i))).fold(T::zero(), T::max);
    let eig = smallest_eigenvalue(gram.values(), n);
    Ok(row_norm * stats.l2_norm / (epsilon * stats.max_abs) - eig)
}

/// Lowest grid point relative to `lambda_0`.
pub const GRID_FLOOR: f64 = 1e-8;

/// Geometric grid of `count` values from `lambda_0 * 1e-8` to `lambda_0`, ascending.
pub fn lambda_grid<T: Scalar>(lambda0: T, count: usize) -> Result<Vec<T>> {
    if !(lambda0 > T::zero()) || !lambda0.is_finite() {
        return Err(HarError::param("lambda0", format!("must be finite and positive, got {lambda0}")));
    }
    match count {
        0 => Err(HarError::param("count", "grid needs at least one point")),
        1 => Ok(vec![lambda0]),
        _ => {
            let decades = -GRID_FLOOR.log10();
            let last = (count - 1) as f64;
            Ok((0..count)
                .map(|k| {
                    let e = -decades * (last - k as f64) / last;
                    lambda0 * T::lit(10f64.powf(e))
                })
                .collect())
        }
    }
}

/// `count` log-spaced values between `lo` and `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64))
        .collect()
}

pub const RBF_BANDWIDTH_RANGE: (f64, f64) = (1e-3, 10.0);
pub const RBF_BANDWIDTH_COUNT: usize = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    /// Suppression level for `lambda_0`.
    pub epsilon: f64,
    pub grid_count: usize,
    pub rbf_bandwidths: Vec<f64>,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            grid_count: 50,
            rbf_bandwidths: log_space(RBF_BANDWIDTH_RANGE.0, RBF_BANDWIDTH_RANGE.1, RBF_BANDWIDTH_COUNT),
        }
    }
}

/// LOOCV scores over every candidate `(spec, lambda)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TuningResult<T> {
    pub candidates: Vec<(KernelSpec<T>, T)>,
    /// Mean squared leave-one-out residual per candidate.
    pub loocv_errors: Vec<T>,
    pub selected: usize,
}

impl<T: Scalar> TuningResult<T> {
    pub fn selected_spec(&self) -> KernelSpec<T> {
        self.candidates[self.selected].0
    }

    pub fn selected_lambda(&self) -> T {
        self.candidates[self.selected].1
    }

    pub fn selected_error(&self) -> T {
        self.loocv_errors[self.selected]
    }
}

/// Index of the smallest score; equal scores go to the larger lambda, then
/// the earlier candidate.
fn select<T: Scalar>(candidates: &[(KernelSpec<T>, T)], scores: &[T]) -> usize {
    let mut best = 0;
    for k in 1..scores.len() {
        let better = scores[k] < scores[best] || (scores[k] == scores[best] && candidates[k].1 > candidates[best].1);
        if better {
            best = k;
        }
    }
    best
}

/// Select lambda (and the RBF bandwidth) by closed-form LOOCV over a grid
/// anchored at `lambda_0`, then refit at the winner.
pub fn tune<T: Scalar>(
    knots: &DesignMatrix<T>,
    y: &[T],
    family: KernelFamily,
    config: &TuningConfig,
) -> Result<(TuningResult<T>, FittedModel<T>)> {
    check_y(knots.nrows(), y)?;
    let specs: Vec<KernelSpec<T>> = match family {
        KernelFamily::Har { order } => vec![KernelSpec::Har { order }],
        KernelFamily::MixedSobolev => vec![KernelSpec::MixedSobolev],
        KernelFamily::Rbf => {
            if config.rbf_bandwidths.is_empty() {
                return Err(HarError::param("rbf_bandwidths", "no bandwidths to search"));
            }
            config
                .rbf_bandwidths
                .iter()
                .map(|&b| KernelSpec::Rbf { bandwidth: T::lit(b) })
                .collect()
        }
    };
    let epsilon = T::lit(config.epsilon);
    let mut candidates = Vec::new();
    let mut scores = Vec::new();
    let mut single_gram = None;
    for spec in &specs {
        let gram = gram_matrix(knots, spec)?;
        let lambda0 = lambda_max(&gram, y, epsilon)?;
        let grid = lambda_grid(lambda0, config.grid_count)?;
        let s = grid
            .par_iter()
            .map(|&lambda| loocv_score(&gram, y, lambda))
            .collect::<Result<Vec<T>>>()?;
        log::debug!("{spec}: lambda_0 = {lambda0}, best score {}", s.iter().fold(T::infinity(), |m, &v| m.min(v)));
        if let Some(k) = s.iter().position(|v| !v.is_finite()) {
            return Err(HarError::InvalidInput(format!(
                "non-finite LOOCV score for {spec} at lambda {}",
                grid[k]
            )));
        }
        candidates.extend(grid.into_iter().map(|l| (*spec, l)));
        scores.extend(s);
        if specs.len() == 1 {
            single_gram = Some(gram);
        }
    }
    let selected = select(&candidates, &scores);
    let (spec, lambda) = candidates[selected];
    let gram = match single_gram {
        Some(g) => g,
        None => gram_matrix(knots, &spec)?,
    };
    let model = fit_with_gram(knots, &gram, y, lambda)?;
    Ok((
        TuningResult {
            candidates,
            loocv_errors: scores,
            selected,
        },
        model,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn har0() -> KernelSpec<f64> {
        KernelSpec::Har { order: 0 }
    }

    #[test]
    fn single_point_fit() {
        let knots = DesignMatrix::column(vec![0.5]).unwrap();
        let m = fit(&knots, &[2.0], &har0(), 1.0).unwrap();
        assert_relative_eq!(m.alpha[0], 2.0 / 3.0, epsilon = 1e-15);
        let p = m.predict(&knots).unwrap();
        assert_relative_eq!(p[0], 4.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn heavy_regularization_shrinks() {
        let knots = DesignMatrix::from_rows(&[vec![0.1, 0.3], vec![0.5, 0.9], vec![0.8, 0.2]]).unwrap();
        let y = [1.0, -2.0, 0.5];
        let lambda = 1e10;
        let m = fit(&knots, &y, &har0(), lambda).unwrap();
        assert_relative_eq!(norm2(&m.alpha), norm2(&y) / lambda, max_relative = 1e-8);
        assert!(m.predict(&knots).unwrap().iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn rejects_bad_arguments() {
        let knots = DesignMatrix::column(vec![0.5, 0.6]).unwrap();
        assert!(fit(&knots, &[1.0], &har0(), 1.0).is_err());
        assert!(fit(&knots, &[1.0, 2.0], &har0(), -1.0).is_err());
        let g = gram_matrix(&knots, &har0()).unwrap();
        assert!(matches!(loocv_errors(&g, &[1.0, 2.0], 0.0), Err(HarError::InvalidParameter { .. })));
        assert!(matches!(lambda_max(&g, &[0.0, 0.0], 1e-3), Err(HarError::UndefinedScale)));
        assert!(lambda_max(&g, &[1.0, 0.0], 1.5).is_err());
        assert!(lambda_grid(0.0, 3).is_err());
        assert!(lambda_grid(1.0, 0).is_err());
    }

    #[test]
    fn duplicate_rows_fit_at_zero_lambda() {
        let knots = DesignMatrix::from_rows(&[vec![0.4, 0.4], vec![0.4, 0.4], vec![0.9, 0.1]]).unwrap();
        let m = fit(&knots, &[1.0, 1.0, 2.0], &har0(), 0.0).unwrap();
        assert!(m.jitter > 0.0);
        assert!(m.alpha.iter().all(|a| a.is_finite()));
    }

    #[test]
    fn single_point_loocv() {
        let knots = DesignMatrix::column(vec![0.3]).unwrap();
        let g = gram_matrix(&knots, &har0()).unwrap();
        for lambda in [1e-3, 1.0, 1e4] {
            assert_relative_eq!(loocv_errors(&g, &[1.7], lambda).unwrap()[0], 1.7, max_relative = 1e-12);
        }
    }

    #[test]
    fn loocv_large_lambda_returns_y() {
        let knots = DesignMatrix::from_rows(&[vec![0.1], vec![0.5], vec![0.9]]).unwrap();
        let g = gram_matrix(&knots, &har0()).unwrap();
        let y = [1.0, -1.0, 3.0];
        let e = loocv_errors(&g, &y, 1e12).unwrap();
        for (a, b) in e.iter().zip(y) {
            assert_relative_eq!(*a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn lambda_max_closed_cases() {
        let g = GramMatrix::from_values(1, vec![3.0], har0(), String::new()).unwrap();
        let eps = 1e-3;
        assert_relative_eq!(lambda_max(&g, &[-2.0], eps).unwrap(), 3.0 * (1.0 / eps - 1.0), max_relative = 1e-12);
        for n in [1usize, 4, 9] {
            let mut eye = vec![0.0; n * n];
            (0..n).for_each(|i| eye[i * n + i] = 1.0);
            let g = GramMatrix::from_values(n, eye, har0(), String::new()).unwrap();
            let l = lambda_max(&g, &vec![1.0; n], eps).unwrap();
            assert_relative_eq!(l, (n as f64).sqrt() / eps - 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn grid_shape() {
        let g = lambda_grid(1.0, 3).unwrap();
        assert_relative_eq!(g[0], 1e-8, max_relative = 1e-12);
        assert_relative_eq!(g[1], 1e-4, max_relative = 1e-12);
        assert_eq!(g[2], 1.0);
        let g = lambda_grid(7.5, 50).unwrap();
        assert_eq!(g.len(), 50);
        assert_eq!(*g.last().unwrap(), 7.5);
        let r = 10f64.powf(-8.0 / 49.0);
        for w in g.windows(2) {
            assert_relative_eq!(w[0] / w[1], r, max_relative = 1e-12);
        }
        assert_eq!(lambda_grid(2.0, 1).unwrap(), vec![2.0]);
    }

    #[test]
    fn bandwidth_grid() {
        let b = TuningConfig::default().rbf_bandwidths;
        assert_eq!(b.len(), 13);
        assert_relative_eq!(b[0], 1e-3, max_relative = 1e-12);
        assert_relative_eq!(b[12], 10.0, max_relative = 1e-12);
        assert_relative_eq!(b[1] / b[0], 10f64.powf(4.0 / 12.0), max_relative = 1e-12);
    }

    #[test]
    fn selection_prefers_larger_lambda_on_ties() {
        let s = har0();
        let cands = vec![(s, 1.0), (s, 2.0), (s, 3.0), (s, 4.0)];
        assert_eq!(select(&cands, &[0.5, 0.2, 0.2, 0.3]), 2);
        assert_eq!(select(&cands[..1], &[0.5]), 0);
    }

    #[test]
    fn grid_of_one() {
        let knots = DesignMatrix::from_rows(&[vec![0.1], vec![0.5], vec![0.9]]).unwrap();
        let cfg = TuningConfig {
            grid_count: 1,
            ..TuningConfig::default()
        };
        let (res, model) = tune(&knots, &[1.0, 2.0, 0.0], KernelFamily::Har { order: 0 }, &cfg).unwrap();
        assert_eq!(res.selected, 0);
        assert_eq!(res.candidates.len(), 1);
        assert_eq!(model.lambda, res.selected_lambda());
    }

    #[test]
    fn rbf_tuning_covers_bandwidth_grid() {
        let knots = DesignMatrix::from_rows(&(0..12).map(|i| vec![i as f64 / 11.0]).collect::<Vec<_>>()).unwrap();
        let y: Vec<f64> = (0..12).map(|i| (i as f64 / 2.0).sin()).collect();
        let cfg = TuningConfig {
            grid_count: 5,
            ..TuningConfig::default()
        };
        let (res, model) = tune(&knots, &y, KernelFamily::Rbf, &cfg).unwrap();
        assert_eq!(res.candidates.len(), 13 * 5);
        assert_eq!(model.spec, res.selected_spec());
        let best = res.loocv_errors.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(res.selected_error(), best);
    }
}
