use har_core::data::seeded_rng;
use har_core::{
    fit, gram_matrix, lambda_grid, lambda_max, loocv_errors, tune, DesignMatrix, GramMatrix, KernelFamily, KernelSpec,
    TuningConfig,
};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn problem() -> impl Strategy<Value = (DesignMatrix<f64>, Vec<f64>)> {
    (2usize..=25, 1usize..=4).prop_flat_map(|(n, p)| {
        (
            proptest::collection::vec(0.0f64..=1.0, n * p).prop_map(move |v| DesignMatrix::new(n, p, v).unwrap()),
            proptest::collection::vec(-3.0f64..3.0, n),
        )
    })
}

fn spec() -> impl Strategy<Value = KernelSpec<f64>> {
    prop_oneof![
        (0u32..=2).prop_map(|order| KernelSpec::Har { order }),
        Just(KernelSpec::MixedSobolev),
        (-1.0f64..1.0).prop_map(|e| KernelSpec::Rbf {
            bandwidth: 10f64.powf(e)
        }),
    ]
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dual_coefficients_solve_the_system((x, y) in problem(), spec in spec(), e in -3i32..3) {
        let lambda = 10f64.powi(e);
        let m = fit(&x, &y, &spec, lambda).unwrap();
        let g = gram_matrix(&x, &spec).unwrap();
        prop_assert!(m.residual_norm(&g, &y) <= 1e-8 * norm(&y).max(1e-300));
        prop_assert_eq!(m.alpha.len(), x.nrows());
    }

    #[test]
    fn scaling_y_scales_alpha_and_predictions((x, y) in problem(), spec in spec(), c in -5.0f64..5.0) {
        let a = fit(&x, &y, &spec, 0.1).unwrap();
        let yc: Vec<f64> = y.iter().map(|v| c * v).collect();
        let b = fit(&x, &yc, &spec, 0.1).unwrap();
        let scale = norm(&a.alpha) * c.abs() + 1e-300;
        for (u, v) in a.alpha.iter().zip(&b.alpha) {
            prop_assert!((c * u - v).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn alpha_norm_shrinks_along_the_grid((x, y) in problem(), spec in spec()) {
        prop_assume!(y.iter().any(|v| *v != 0.0));
        let g = gram_matrix(&x, &spec).unwrap();
        let grid = lambda_grid(lambda_max(&g, &y, 1e-3).unwrap(), 12).unwrap();
        let norms: Vec<f64> = grid.iter().map(|&l| norm(&fit(&x, &y, &spec, l).unwrap().alpha)).collect();
        for w in norms.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-10), "{:?}", norms);
        }
    }

    #[test]
    fn loocv_selection_ignores_positive_rescaling((x, y) in problem(), spec in spec(), k in -4i32..4) {
        prop_assume!(y.iter().any(|v| *v != 0.0));
        let family = spec.family();
        let cfg = TuningConfig { grid_count: 8, ..TuningConfig::default() };
        // a power of two rescales exactly, so the scores scale exactly too
        let c = 2f64.powi(k);
        let yc: Vec<f64> = y.iter().map(|v| c * v).collect();
        let (a, _) = tune(&x, &y, family, &cfg).unwrap();
        let (b, _) = tune(&x, &yc, family, &cfg).unwrap();
        prop_assert_eq!(a.selected, b.selected);
        prop_assert!(a.loocv_errors.iter().all(|e| e.is_finite() && *e >= 0.0));
        let best = a.loocv_errors.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(a.selected_error(), best);
    }
}

#[test]
fn heavy_regularization_shrinks_everything() {
    let x = DesignMatrix::from_rows(&[vec![0.1, 0.2], vec![0.5, 0.9], vec![0.7, 0.3]]).unwrap();
    let y = [1.0, -2.0, 0.5];
    let lambda = 1e12;
    let m = fit(&x, &y, &KernelSpec::Har { order: 0 }, lambda).unwrap();
    assert!((norm(&m.alpha) - norm(&y) / lambda).abs() < 1e-6 * norm(&y) / lambda);
    assert!(m.predict(&x).unwrap().iter().all(|p| p.abs() < 1e-9));
    let e = loocv_errors(&gram_matrix(&x, &KernelSpec::Har { order: 0 }).unwrap(), &y, lambda).unwrap();
    for (ei, yi) in e.iter().zip(&y) {
        assert!((ei - yi).abs() < 1e-9);
    }
}

#[test]
fn tiny_lambda_interpolates() {
    let x = DesignMatrix::from_rows(&[vec![0.1, 0.2], vec![0.5, 0.9], vec![0.7, 0.3], vec![0.9, 0.95]]).unwrap();
    let y = [1.0f64, -2.0, 0.5, 3.0];
    let m = fit(&x, &y, &KernelSpec::Har { order: 0 }, 1e-10).unwrap();
    for (p, t) in m.predict(&x).unwrap().iter().zip(&y) {
        assert!((p - t).abs() <= 1e-6 * t.abs());
    }
}

#[test]
fn lambda_max_closed_forms() {
    let eps = 1e-3f64;
    let one = GramMatrix::from_values(1, vec![2.5], KernelSpec::MixedSobolev, String::new()).unwrap();
    let l = lambda_max(&one, &[-4.0], eps).unwrap();
    assert!((l - 2.5 * (1.0 / eps - 1.0)).abs() < 1e-9 * l);

    let n = 5;
    let mut eye = vec![0.0; n * n];
    (0..n).for_each(|i| eye[i * n + i] = 1.0);
    let g = GramMatrix::from_values(n, eye, KernelSpec::MixedSobolev, String::new()).unwrap();
    let l = lambda_max(&g, &vec![1.0; n], eps).unwrap();
    let expect = (n as f64).sqrt() / eps - 1.0;
    assert!((l - expect).abs() < 1e-6 * expect);
}

#[test]
fn grid_examples() {
    let g = lambda_grid(1.0f64, 3).unwrap();
    for (a, b) in g.iter().zip([1e-8, 1e-4, 1.0]) {
        assert!((a - b).abs() <= 1e-12 * b);
    }
    let g = lambda_grid(1.0f64, 50).unwrap();
    let step = 10f64.powf(-8.0 / 49.0);
    assert_eq!(*g.last().unwrap(), 1.0);
    assert!(g.windows(2).all(|w| (w[0] / w[1] - step).abs() < 1e-12));
}

#[test]
fn single_point_grid_selects_it() {
    let x = DesignMatrix::from_rows(&[vec![0.1], vec![0.6], vec![0.9]]).unwrap();
    let cfg = TuningConfig {
        grid_count: 1,
        ..TuningConfig::default()
    };
    let (r, m) = tune(&x, &[1.0, 2.0, 0.0], KernelFamily::Har { order: 0 }, &cfg).unwrap();
    assert_eq!(r.selected, 0);
    assert_eq!(m.lambda, r.candidates[0].1);
}

#[test]
fn pure_noise_selects_heavy_regularization() {
    let (n, p, reps, grid) = (80, 3, 10, 50);
    let cfg = TuningConfig {
        grid_count: grid,
        ..TuningConfig::default()
    };
    let mut upper = 0;
    for rep in 0..reps {
        let mut rng = seeded_rng(2024, rep);
        let x = DesignMatrix::new(n, p, (0..n * p).map(|_| rng.random::<f64>()).collect()).unwrap();
        let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (r, _) = tune(&x, &y, KernelFamily::Har { order: 0 }, &cfg).unwrap();
        if r.selected >= grid / 2 {
            upper += 1;
        }
    }
    assert!(upper >= 8, "only {upper} of {reps} replications chose the upper half of the grid");
}

#[test]
fn first_order_har_recovers_a_linear_function() {
    let (n, p) = (100, 2);
    let mut rng = seeded_rng(7, 0);
    let draw = |rng: &mut rand_chacha::ChaCha20Rng, m: usize| {
        let x = DesignMatrix::new(m, p, (0..m * p).map(|_| rng.random::<f64>()).collect()).unwrap();
        let y: Vec<f64> = x.rows_iter().map(|r| 3.0 * r[0] - 1.0).collect();
        (x, y)
    };
    let (x, y) = draw(&mut rng, n);
    let (xt, yt) = draw(&mut rng, 500);
    let (_, m) = tune(&x, &y, KernelFamily::Har { order: 1 }, &TuningConfig::default()).unwrap();
    let pred = m.predict(&xt).unwrap();
    let rmse = (pred.iter().zip(&yt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / yt.len() as f64).sqrt();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sd = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt();
    assert!(rmse <= 0.05 * sd, "rmse {rmse} vs sd {sd}");
}

#[test]
fn f32_fit_tracks_f64() {
    let rows = [vec![0.1, 0.2], vec![0.5, 0.9], vec![0.7, 0.3], vec![0.3, 0.6]];
    let x64 = DesignMatrix::from_rows(&rows).unwrap();
    let x32 = DesignMatrix::<f32>::from_rows(&rows.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect::<Vec<_>>()).unwrap();
    let a = fit(&x64, &[1.0, -1.0, 0.5, 2.0], &KernelSpec::MixedSobolev, 0.5).unwrap();
    let b = fit(&x32, &[1.0f32, -1.0, 0.5, 2.0], &KernelSpec::MixedSobolev, 0.5).unwrap();
    for (u, v) in a.alpha.iter().zip(&b.alpha) {
        assert!((u - *v as f64).abs() < 1e-3 * (1.0 + u.abs()));
    }
}
