use std::io::Write;

use har_core::data::{apply_scaling, fit_scaling, load_csv, load_feature_rows, split, split_indices, SplitSpec, TargetSelector};
use har_core::{DesignMatrix, HarError};
use proptest::prelude::*;

proptest! {
    #[test]
    fn split_is_a_seeded_partition(n in 2usize..500, frac in 0.01f64..0.99, seed in any::<u64>(), cap in proptest::option::of(2usize..600)) {
        let spec = SplitSpec { train_fraction: frac, seed, max_rows: cap };
        let s = split_indices(n, &spec).unwrap();
        let used = cap.map_or(n, |c| c.min(n));
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..used).collect::<Vec<_>>());
        prop_assert!(!s.train.is_empty() && !s.test.is_empty());
        prop_assert_eq!(s, split_indices(n, &spec).unwrap());
    }

    #[test]
    fn scaled_training_data_spans_the_unit_cube(
        rows in 1usize..40,
        cols in 1usize..5,
        values in proptest::collection::vec(-1e6f64..1e6, 200),
    ) {
        let x = DesignMatrix::new(rows, cols, values[..rows * cols].to_vec()).unwrap();
        let params = fit_scaling(&x);
        let s = apply_scaling(&params, &x).unwrap();
        prop_assert!(s.check_unit_cube().is_ok());
        for j in 0..cols {
            let col: Vec<f64> = (0..rows).map(|i| s.get(i, j)).collect();
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            if params.ranges[j].1 > params.ranges[j].0 {
                prop_assert_eq!((lo, hi), (0.0, 1.0));
            } else {
                prop_assert!(col.iter().all(|&v| v == 0.5));
            }
        }
    }

    #[test]
    fn unseen_points_are_clamped(v in -1e3f64..1e3) {
        let x = DesignMatrix::column(vec![0.0, 10.0]).unwrap();
        let s = apply_scaling(&fit_scaling(&x), &DesignMatrix::column(vec![v]).unwrap()).unwrap();
        prop_assert!((0.0..=1.0).contains(&s.get(0, 0)));
    }
}

fn csv_file(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

#[test]
fn split_datasets_keep_rows_together() {
    let f = csv_file("a,b,y\n1,10,100\n2,20,200\n3,30,300\n4,40,400\n5,50,500\n");
    let d = load_csv::<f64>(f.path(), &TargetSelector::Last).unwrap();
    let (train, test) = split(&d, &SplitSpec::new(0.6, 9)).unwrap();
    assert_eq!((train.len(), test.len()), (3, 2));
    for part in [&train, &test] {
        for (row, y) in part.features.rows_iter().zip(&part.target) {
            assert_eq!(row[1], row[0] * 10.0);
            assert_eq!(*y, row[0] * 100.0);
        }
    }
}

#[test]
fn target_column_may_sit_anywhere() {
    let f = csv_file("y,a,b\n1,2,3\n4,5,6\n");
    let d = load_csv::<f64>(f.path(), &TargetSelector::Name("y".into())).unwrap();
    assert_eq!(d.feature_names, ["a", "b"]);
    assert_eq!(d.target, [1.0, 4.0]);
    assert!(matches!(
        load_csv::<f64>(f.path(), &TargetSelector::Name("z".into())),
        Err(HarError::MissingTarget(_))
    ));
}

#[test]
fn nan_rows_are_dropped_and_counted() {
    let f = csv_file("a,y\n1,2\nNaN,3\n4,\n5,6\n");
    let d = load_csv::<f32>(f.path(), &TargetSelector::Last).unwrap();
    assert_eq!(d.len(), 2);
    assert_eq!(d.dropped_rows, 2);
}

#[test]
fn feature_rows_follow_model_column_order() {
    let f = csv_file("b,extra,a\n2,x,1\n4,y,3\n");
    let names = vec!["a".to_string(), "b".to_string()];
    let (m, header, records) = load_feature_rows::<f64>(f.path(), &names).unwrap();
    let m = m.unwrap();
    assert_eq!(m.row(0), [1.0, 2.0]);
    assert_eq!(m.row(1), [3.0, 4.0]);
    assert_eq!(header.len(), 3);
    assert_eq!(records.len(), 2);
    let missing = vec!["a".to_string(), "c".to_string()];
    assert!(matches!(
        load_feature_rows::<f64>(f.path(), &missing),
        Err(HarError::SchemaMismatch { .. })
    ));
}
