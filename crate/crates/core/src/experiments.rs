//! Seeded simulation and benchmark studies: a 1-D demonstration fit, a 10-D
//! convergence study, and a multi-dataset RMSE benchmark.
//!
//! All randomness comes from [`seeded_rng`] with a stream chosen by
//! [`cell_stream`], so each cell of a study is reproducible on its own and
//! parallel execution matches serial execution.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{apply_scaling, fit_scaling, load_csv, rmse, seeded_rng, split_indices, SplitSpec, TargetSelector};
use crate::error::Result;
use crate::kernels::{KernelFamily, KernelSpec};
use crate::matrix::DesignMatrix;
use crate::section_table::SectionTable;
use crate::solver::{tune, FittedModel, TuningConfig};

/// Stream families for [`cell_stream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamKind {
    Demo = 1,
    ConvergenceTrain = 2,
    ConvergenceTest = 3,
    BenchmarkSplit = 4,
}

/// `kind << 48 | a << 24 | b`: the generator stream of cell `(a, b)`.
pub fn cell_stream(kind: StreamKind, a: usize, b: usize) -> u64 {
    ((kind as u64) << 48) | (((a as u64) & 0xFF_FFFF) << 24) | ((b as u64) & 0xFF_FFFF)
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

// ---------------------------------------------------------------------------
// 1-D demonstration

pub const DEMO_NOISE_SD: f64 = 0.3;

/// `-x` for `x <= 0`, `sin(2 pi x)` otherwise.
pub fn demo_truth(x: f64) -> f64 {
    if x <= 0.0 {
        -x
    } else {
        (2.0 * PI * x).sin()
    }
}

/// `X ~ U[-1, 1]`, `Y = truth(X) + N(0, 0.3^2)`.
pub fn simulate_demo_1d(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = seeded_rng(seed, cell_stream(StreamKind::Demo, 0, 0));
    let noise = Normal::new(0.0, DEMO_NOISE_SD).expect("valid sd");
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random_range(-1.0..=1.0);
        xs.push(x);
        ys.push(demo_truth(x) + noise.sample(&mut rng));
    }
    (xs, ys)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub n: usize,
    pub grid_points: usize,
    pub seed: u64,
    pub methods: Vec<KernelFamily>,
    pub tuning: TuningConfig,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            n: 50,
            grid_points: 401,
            seed: 0,
            methods: default_methods(),
            tuning: TuningConfig::default(),
        }
    }
}

pub fn default_methods() -> Vec<KernelFamily> {
    vec![
        KernelFamily::Har { order: 0 },
        KernelFamily::MixedSobolev,
        KernelFamily::Rbf,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedModel {
    pub method: String,
    pub spec: KernelSpec<f64>,
    pub lambda: f64,
    pub loocv_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoOutput {
    pub train_x: Vec<f64>,
    pub train_y: Vec<f64>,
    pub grid_x: Vec<f64>,
    pub truth: Vec<f64>,
    /// `(method label, predictions on grid_x)`
    pub predictions: Vec<(String, Vec<f64>)>,
    pub selected: Vec<SelectedModel>,
}

impl DemoOutput {
    /// Plot-ready CSV: `x,truth,<method>...` with one row per grid point.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,truth");
        for (m, _) in &self.predictions {
            s.push(',');
            s.push_str(m);
        }
        s.push('\n');
        for (k, x) in self.grid_x.iter().enumerate() {
            let _ = write!(s, "{},{}", fmt_f64(*x), fmt_f64(self.truth[k]));
            for (_, p) in &self.predictions {
                let _ = write!(s, ",{}", fmt_f64(p[k]));
            }
            s.push('\n');
        }
        s
    }
}

/// Fit every configured method to one demonstration draw and evaluate the fits
/// on an evenly spaced grid over `[-1, 1]`.
pub fn run_demo(config: &DemoConfig) -> Result<DemoOutput> {
    let (xs, ys) = simulate_demo_1d(config.n, config.seed);
    let raw = DesignMatrix::column(xs.clone())?;
    let scaling = fit_scaling(&raw);
    let train = apply_scaling(&scaling, &raw)?;
    let m = config.grid_points.max(2);
    let grid_x: Vec<f64> = (0..m).map(|k| -1.0 + 2.0 * k as f64 / (m - 1) as f64).collect();
    let grid = DesignMatrix::column(grid_x.clone())?;
    let mut predictions = Vec::new();
    let mut selected = Vec::new();
    for family in &config.methods {
        log::info!("demo: tuning {family}");
        let (res, model) = tune(&train, &ys, *family, &config.tuning)?;
        let model = model.with_scaling(scaling.clone());
        predictions.push((family.label(), model.predict_raw(&grid)?));
        selected.push(SelectedModel {
            method: family.label(),
            spec: model.spec,
            lambda: model.lambda,
            loocv_error: res.selected_error(),
        });
    }
    Ok(DemoOutput {
        train_x: xs,
        train_y: ys,
        truth: grid_x.iter().map(|&x| demo_truth(x)).collect(),
        grid_x,
        predictions,
        selected,
    })
}

// ---------------------------------------------------------------------------
// 10-D interaction simulation

pub const INTERACTION_DIM: usize = 10;
pub const INTERACTION_RAMP: f64 = 0.05;
pub const INTERACTION_NOISE_SD: f64 = 0.1;

/// Ramp start `1 - (1/2)^{1/5} - 0.05`.
pub fn interaction_offset() -> f64 {
    1.0 - 0.5f64.powf(0.2) - INTERACTION_RAMP
}

/// `prod_{j<5} x_j - prod_{j>=5} clamp((x_j - x0) / 0.05, 0, 1)`.
pub fn interaction_truth(x: &[f64]) -> f64 {
    let x0 = interaction_offset();
    let smooth: f64 = x[..5].iter().product();
    let cliff: f64 = x[5..10]
        .iter()
        .map(|&v| ((v - x0) / INTERACTION_RAMP).clamp(0.0, 1.0))
        .product();
    smooth - cliff
}

fn draw_interaction<R: Rng>(n: usize, rng: &mut R) -> Result<(DesignMatrix<f64>, Vec<f64>, Vec<f64>)> {
    let noise = Normal::new(0.0, INTERACTION_NOISE_SD).expect("valid sd");
    let mut values = Vec::with_capacity(n * INTERACTION_DIM);
    let mut truth = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let start = values.len();
        for _ in 0..INTERACTION_DIM {
            values.push(rng.random::<f64>());
        }
        let f = interaction_truth(&values[start..]);
        truth.push(f);
        y.push(f + noise.sample(rng));
    }
    Ok((DesignMatrix::new(n, INTERACTION_DIM, values)?, y, truth))
}

/// `n` draws of `X ~ U[0,1]^10` with noisy outcomes.
pub fn simulate_interaction_10d(n: usize, seed: u64) -> Result<(DesignMatrix<f64>, Vec<f64>)> {
    let (x, y, _) = draw_interaction(n, &mut seeded_rng(seed, 0))?;
    Ok((x, y))
}

/// `n^{-1/3} (ln n)^{2(p-1)/3}`.
pub fn theoretical_rate(n: usize, p: usize) -> f64 {
    let n = n as f64;
    n.powf(-1.0 / 3.0) * n.ln().powf(2.0 * (p as f64 - 1.0) / 3.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub n_values: Vec<usize>,
    pub replications: usize,
    pub test_size: usize,
    pub seed: u64,
    pub tuning: TuningConfig,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            n_values: vec![100, 200, 400, 800, 1600],
            replications: 10,
            test_size: 10_000,
            seed: 0,
            tuning: TuningConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub mean_rmse: f64,
    pub theoretical_rate: f64,
    pub ratio: f64,
    pub rmse_per_replication: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,mean_rmse,theoretical_rate,ratio\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.n,
                fmt_f64(r.mean_rmse),
                fmt_f64(r.theoretical_rate),
                fmt_f64(r.ratio)
            );
        }
        s
    }
}

/// Predictions of an order-0 HAR model, through the section table when it fits
/// in memory.
fn predict_fast(model: &FittedModel<f64>, test: &DesignMatrix<f64>) -> Result<Vec<f64>> {
    match SectionTable::from_model(model) {
        Ok(table) => table.predict(test),
        Err(_) => model.predict(test),
    }
}

/// Tuned order-0 HAR on fresh draws at each sample size; RMSE is measured
/// against the noiseless regression function on a held-out draw.
pub fn run_convergence(config: &ConvergenceConfig) -> Result<ConvergenceReport> {
    if config.n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(crate::error::HarError::param("n_values", "must be strictly increasing"));
    }
    if config.replications == 0 || config.test_size == 0 {
        return Err(crate::error::HarError::param(
            "replications",
            "replications and test size must be positive",
        ));
    }
    let mut rows = Vec::with_capacity(config.n_values.len());
    for (ni, &n) in config.n_values.iter().enumerate() {
        let rmses = (0..config.replications)
            .into_par_iter()
            .map(|rep| {
                let mut train_rng = seeded_rng(config.seed, cell_stream(StreamKind::ConvergenceTrain, ni, rep));
                let (x, y, _) = draw_interaction(n, &mut train_rng)?;
                let mut test_rng = seeded_rng(config.seed, cell_stream(StreamKind::ConvergenceTest, 0, rep));
                let (xt, _, truth) = draw_interaction(config.test_size, &mut test_rng)?;
                let (_, model) = tune(&x, &y, KernelFamily::Har { order: 0 }, &config.tuning)?;
                let pred = predict_fast(&model, &xt)?;
                let e = rmse(&pred, &truth)?;
                log::info!("convergence: n = {n}, replication {rep}: rmse {e:.5}, lambda {:.4e}", model.lambda);
                Ok(e)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mean = rmses.iter().sum::<f64>() / rmses.len() as f64;
        let rate = theoretical_rate(n, INTERACTION_DIM);
        rows.push(ConvergenceRow {
            n,
            mean_rmse: mean,
            theoretical_rate: rate,
            ratio: mean / rate,
            rmse_per_replication: rmses,
        });
    }
    Ok(ConvergenceReport { rows })
}

// ---------------------------------------------------------------------------
// Dataset benchmark

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub datasets: Vec<PathBuf>,
    pub methods: Vec<KernelFamily>,
    pub repeats: usize,
    pub seed: u64,
    pub max_rows: Option<usize>,
    pub train_fraction: f64,
    pub target: TargetSelector,
    pub tuning: TuningConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            methods: default_methods(),
            repeats: 5,
            seed: 0,
            max_rows: Some(2000),
            train_fraction: 0.8,
            target: TargetSelector::Last,
            tuning: TuningConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCell {
    pub dataset: String,
    pub method: String,
    pub n: usize,
    pub p: usize,
    pub mean_rmse: f64,
    pub sd_rmse: f64,
    pub rmse: Vec<f64>,
    pub error: Option<String>,
    /// Seconds spent tuning and predicting, summed over repeats. Not part of
    /// the serialized report so identical runs produce identical files.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub repeats: usize,
    pub cells: Vec<BenchmarkCell>,
}

impl BenchmarkReport {
    pub fn cell(&self, dataset: &str, method: &str) -> Option<&BenchmarkCell> {
        self.cells.iter().find(|c| c.dataset == dataset && c.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("dataset,method,n,p,repeats,mean_rmse,sd_rmse,error\n");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                c.dataset,
                c.method,
                c.n,
                c.p,
                c.rmse.len(),
                fmt_f64(c.mean_rmse),
                fmt_f64(c.sd_rmse),
                c.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
            );
        }
        s
    }

    pub fn timings_csv(&self) -> String {
        let mut s = String::from("dataset,method,wall_clock_secs\n");
        for c in &self.cells {
            let _ = writeln!(s, "{},{},{:.3}", c.dataset, c.method, c.wall_clock_secs);
        }
        s
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var.sqrt())
}

fn dataset_label(path: &std::path::Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn failed_cells(dataset: &str, methods: &[KernelFamily], err: String) -> Vec<BenchmarkCell> {
    methods
        .iter()
        .map(|m| BenchmarkCell {
            dataset: dataset.to_string(),
            method: m.label(),
            n: 0,
            p: 0,
            mean_rmse: f64::NAN,
            sd_rmse: f64::NAN,
            rmse: Vec::new(),
            error: Some(err.clone()),
            wall_clock_secs: 0.0,
        })
        .collect()
}

/// For each dataset and repeat: keep the first `max_rows` rows, split with a
/// per-(dataset, repeat) seed, scale on the training part, then tune and score
/// every method on the same split.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    let mut cells = Vec::new();
    for (di, path) in config.datasets.iter().enumerate() {
        let label = dataset_label(path);
        let data = match load_csv::<f64>(path, &config.target) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("benchmark: {label}: {e}");
                cells.extend(failed_cells(&label, &config.methods, e.to_string()));
                continue;
            }
        };
        let n_used = config.max_rows.map_or(data.len(), |m| m.min(data.len()));
        let p = data.features.ncols();
        let mut per_method: Vec<(Vec<f64>, Option<String>, f64)> = vec![(Vec::new(), None, 0.0); config.methods.len()];
        for rep in 0..config.repeats {
            let spec = SplitSpec {
                train_fraction: config.train_fraction,
                seed: config.seed ^ cell_stream(StreamKind::BenchmarkSplit, di, rep),
                max_rows: config.max_rows,
            };
            let prepared = split_indices(data.len(), &spec).and_then(|s| {
                let train = data.select_rows(&s.train)?;
                let test = data.select_rows(&s.test)?;
                let scaling = fit_scaling(&train.features);
                let xtr = apply_scaling(&scaling, &train.features)?;
                let xte = apply_scaling(&scaling, &test.features)?;
                Ok((train, test, xtr, xte))
            });
            let (train, test, xtr, xte) = match prepared {
                Ok(v) => v,
                Err(e) => {
                    per_method.iter_mut().for_each(|m| m.1 = Some(e.to_string()));
                    break;
                }
            };
            for (mi, family) in config.methods.iter().enumerate() {
                if per_method[mi].1.is_some() {
                    continue;
                }
                let start = Instant::now();
                let outcome = tune(&xtr, &train.target, *family, &config.tuning)
                    .and_then(|(_, model)| model.predict(&xte))
                    .and_then(|pred| rmse(&pred, &test.target));
                per_method[mi].2 += start.elapsed().as_secs_f64();
                match outcome {
                    Ok(e) => {
                        log::info!("benchmark: {label} / {family} repeat {rep}: rmse {e:.5}");
                        per_method[mi].0.push(e);
                    }
                    Err(e) => {
                        log::warn!("benchmark: {label} / {family} repeat {rep}: {e}");
                        per_method[mi].1 = Some(e.to_string());
                    }
                }
            }
        }
        for (family, (rmses, error, secs)) in config.methods.iter().zip(per_method) {
            let (mean, sd) = if error.is_some() { (f64::NAN, f64::NAN) } else { mean_sd(&rmses) };
            cells.push(BenchmarkCell {
                dataset: label.clone(),
                method: family.label(),
                n: n_used,
                p,
                mean_rmse: mean,
                sd_rmse: sd,
                rmse: rmses,
                error,
                wall_clock_secs: secs,
            });
        }
    }
    Ok(BenchmarkReport {
        repeats: config.repeats,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn demo_truth_values() {
        assert_relative_eq!(demo_truth(-0.5), 0.5);
        assert_relative_eq!(demo_truth(0.25), 1.0, epsilon = 1e-15);
        assert_eq!(demo_truth(0.0), 0.0);
    }

    #[test]
    fn interaction_values() {
        let x0 = 0.95 - (-(2f64.ln()) / 5.0).exp();
        assert_relative_eq!(interaction_offset(), x0, epsilon = 1e-15);
        assert_relative_eq!(interaction_offset(), 0.0794494367, epsilon = 1e-9);
        assert_eq!(interaction_truth(&[1.0; 10]), 0.0);
        let mut x = [0.0; 10];
        x[..5].fill(1.0);
        assert_eq!(interaction_truth(&x), 1.0);
    }

    #[test]
    fn simulations_are_seeded() {
        let a = simulate_demo_1d(20, 5);
        assert_eq!(a, simulate_demo_1d(20, 5));
        assert_ne!(a, simulate_demo_1d(20, 6));
        assert!(a.0.iter().all(|x| (-1.0..=1.0).contains(x)));
        let (x, y) = simulate_interaction_10d(30, 2).unwrap();
        assert_eq!((x.nrows(), x.ncols(), y.len()), (30, 10, 30));
        x.check_unit_cube().unwrap();
        assert_eq!(simulate_interaction_10d(30, 2).unwrap().1, y);
    }

    #[test]
    fn rate_formula() {
        let n = 400usize;
        let expect = (n as f64).powf(-1.0 / 3.0) * (n as f64).ln().powi(6);
        assert_relative_eq!(theoretical_rate(n, 10), expect, max_relative = 1e-12);
    }

    #[test]
    fn streams_do_not_collide() {
        let a = cell_stream(StreamKind::ConvergenceTrain, 1, 2);
        let b = cell_stream(StreamKind::ConvergenceTrain, 2, 1);
        let c = cell_stream(StreamKind::ConvergenceTest, 1, 2);
        assert!(a != b && a != c && b != c);
    }

    #[test]
    fn tiny_convergence_run_is_well_formed() {
        let cfg = ConvergenceConfig {
            n_values: vec![20],
            replications: 1,
            test_size: 1,
            seed: 3,
            tuning: TuningConfig {
                grid_count: 5,
                ..TuningConfig::default()
            },
        };
        let r = run_convergence(&cfg).unwrap();
        assert_eq!(r.rows.len(), 1);
        let row = &r.rows[0];
        assert!(row.mean_rmse.is_finite() && row.ratio.is_finite());
        assert_eq!(r.to_csv().lines().count(), 2);
        assert!(run_convergence(&ConvergenceConfig {
            n_values: vec![20, 10],
            ..cfg
        })
        .is_err());
    }

    #[test]
    fn missing_dataset_is_recorded() {
        let cfg = BenchmarkConfig {
            datasets: vec![PathBuf::from("/nonexistent/yacht.csv")],
            repeats: 1,
            ..BenchmarkConfig::default()
        };
        let r = run_benchmark(&cfg).unwrap();
        assert_eq!(r.cells.len(), 3);
        assert!(r.cells.iter().all(|c| c.error.is_some() && c.dataset == "yacht"));
    }
}
