//! CSV ingestion, unit-cube scaling, seeded splitting, and error metrics.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HarError, Result};
use crate::matrix::DesignMatrix;
use crate::scalar::Scalar;

/// Identity of the pseudo-random generator, recorded in run outputs.
pub const RNG_ALGORITHM: &str = "ChaCha20Rng(rand_chacha 0.9), seed_from_u64 + set_stream";

/// Generator for stream `stream` of master seed `seed`.
///
/// Distinct streams of one seed are independent, so parallel cells that each
/// own a stream reproduce the serial run exactly.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSelector {
    #[default]
    Last,
    Name(String),
}

impl From<Option<String>> for TargetSelector {
    fn from(v: Option<String>) -> Self {
        v.map_or(TargetSelector::Last, TargetSelector::Name)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset<T: Scalar> {
    pub features: DesignMatrix<T>,
    pub target: Vec<T>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    /// Rows skipped at ingestion because of blank or NaN cells.
    pub dropped_rows: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        Ok(Self {
            features: self.features.select_rows(idx)?,
            target: idx.iter().map(|&i| self.target[i]).collect(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            dropped_rows: 0,
        })
    }
}

struct RawTable {
    headers: Vec<String>,
    records: Vec<csv::StringRecord>,
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path)
        .map_err(|e| HarError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read_table(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let headers = reader.headers()?.iter().map(str::to_string).collect();
    let records = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(RawTable { headers, records })
}

enum Cell<T> {
    Value(T),
    Missing,
    Bad,
}

fn parse_cell<T: Scalar>(s: &str) -> Cell<T> {
    if s.is_empty() {
        return Cell::Missing;
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_nan() => Cell::Missing,
        Ok(v) => Cell::Value(T::lit(v)),
        Err(_) => Cell::Bad,
    }
}

/// Parse numeric rows of `columns`; rows with a blank or NaN cell are dropped.
fn numeric_rows<T: Scalar>(table: &RawTable, columns: &[usize]) -> Result<(Vec<Vec<T>>, usize)> {
    let mut rows = Vec::with_capacity(table.records.len());
    let mut dropped = 0;
    'rows: for rec in &table.records {
        let mut row = Vec::with_capacity(columns.len());
        for &c in columns {
            match parse_cell::<T>(rec.get(c).unwrap_or("")) {
                Cell::Value(v) => row.push(v),
                Cell::Missing => {
                    dropped += 1;
                    continue 'rows;
                }
                Cell::Bad => return Err(HarError::NonNumericColumn(table.headers[c].clone())),
            }
        }
        rows.push(row);
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} row(s) with missing values");
    }
    Ok((rows, dropped))
}

/// Load a headed CSV file; every non-target column must be numeric.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, target: &TargetSelector) -> Result<Dataset<T>> {
    let table = read_table(path.as_ref())?;
    if table.headers.len() < 2 {
        return Err(HarError::InvalidInput(
            "need at least one feature column and a target column".into(),
        ));
    }
    let t = match target {
        TargetSelector::Last => table.headers.len() - 1,
        TargetSelector::Name(name) => table
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HarError::MissingTarget(name.clone()))?,
    };
    let mut columns: Vec<usize> = (0..table.headers.len()).filter(|&c| c != t).collect();
    columns.push(t);
    let (rows, dropped) = numeric_rows::<T>(&table, &columns)?;
    if rows.is_empty() {
        return Err(HarError::EmptyDataset);
    }
    let p = columns.len() - 1;
    let mut features = Vec::with_capacity(rows.len() * p);
    let mut target_values = Vec::with_capacity(rows.len());
    for r in &rows {
        features.extend_from_slice(&r[..p]);
        target_values.push(r[p]);
    }
    Ok(Dataset {
        features: DesignMatrix::new(rows.len(), p, features)?,
        target: target_values,
        feature_names: columns[..p].iter().map(|&c| table.headers[c].clone()).collect(),
        target_name: table.headers[t].clone(),
        dropped_rows: dropped,
    })
}

/// Feature rows of a headed CSV, in the column order of `names`.
///
/// Every name must be present. Returns `None` for a file with no data rows;
/// a zero-byte file reads as a header of `names` with no rows.
pub fn load_feature_rows<T: Scalar>(
    path: impl AsRef<Path>,
    names: &[String],
) -> Result<(Option<DesignMatrix<T>>, csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut table = read_table(path.as_ref())?;
    if table.headers.is_empty() && table.records.is_empty() {
        table.headers = names.to_vec();
    }
    let mut columns = Vec::with_capacity(names.len());
    for name in names {
        match table.headers.iter().position(|h| h == name) {
            Some(c) => columns.push(c),
            None => {
                return Err(HarError::SchemaMismatch {
                    expected: names.join(","),
                    found: table.headers.join(","),
                })
            }
        }
    }
    let mut values = Vec::with_capacity(table.records.len() * names.len());
    for rec in &table.records {
        for &c in &columns {
            match parse_cell::<T>(rec.get(c).unwrap_or("")) {
                Cell::Value(v) => values.push(v),
                _ => {
                    return Err(HarError::InvalidInput(format!(
                        "column `{}` has a missing or non-numeric cell",
                        table.headers[c]
                    )))
                }
            }
        }
    }
    let header = csv::StringRecord::from(table.headers.clone());
    let matrix = if table.records.is_empty() {
        None
    } else {
        Some(DesignMatrix::new(table.records.len(), names.len(), values)?)
    };
    Ok((matrix, header, table.records))
}

/// Per-feature `(min, max)` of the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScalingParams<T> {
    pub ranges: Vec<(T, T)>,
}

pub fn fit_scaling<T: Scalar>(train: &DesignMatrix<T>) -> ScalingParams<T> {
    let p = train.ncols();
    let mut ranges = vec![(T::infinity(), T::neg_infinity()); p];
    for row in train.rows_iter() {
        for (r, &v) in ranges.iter_mut().zip(row) {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
    }
    ScalingParams { ranges }
}

/// `(v - min) / (max - min)` clamped to `[0, 1]`; constant features map to 0.5.
pub fn apply_scaling<T: Scalar>(params: &ScalingParams<T>, features: &DesignMatrix<T>) -> Result<DesignMatrix<T>> {
    if features.ncols() != params.ranges.len() {
        return Err(HarError::DimensionMismatch {
            expected: params.ranges.len(),
            found: features.ncols(),
        });
    }
    let half = T::lit(0.5);
    let values = features
        .rows_iter()
        .flat_map(|row| {
            row.iter().zip(&params.ranges).map(move |(&v, &(lo, hi))| {
                if hi > lo {
                    ((v - lo) / (hi - lo)).max(T::zero()).min(T::one())
                } else {
                    half
                }
            })
        })
        .collect();
    DesignMatrix::new(features.nrows(), features.ncols(), values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    /// Keep only the first `max_rows` rows before splitting.
    pub max_rows: Option<usize>,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        Self {
            train_fraction,
            seed,
            max_rows: None,
        }
    }
}

/// Train and test row indices into the original dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded permutation of the (truncated) rows; the first
/// `ceil(train_fraction * n)` go to train, capped so the test side keeps at
/// least one row.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(HarError::param(
            "train_fraction",
            format!("must lie in (0, 1), got {}", spec.train_fraction),
        ));
    }
    let n = spec.max_rows.map_or(n, |m| m.min(n));
    if n < 2 {
        return Err(HarError::InvalidInput(format!("need at least 2 rows to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded_rng(spec.seed, 0));
    let n_train = ((spec.train_fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n - 1);
    let test = idx.split_off(n_train);
    Ok(SplitIndices { train: idx, test })
}

pub fn split<T: Scalar>(dataset: &Dataset<T>, spec: &SplitSpec) -> Result<(Dataset<T>, Dataset<T>)> {
    let s = split_indices(dataset.len(), spec)?;
    Ok((dataset.select_rows(&s.train)?, dataset.select_rows(&s.test)?))
}

pub fn rmse<T: Scalar>(predicted: &[T], actual: &[T]) -> Result<T> {
    if predicted.len() != actual.len() {
        return Err(HarError::DimensionMismatch {
            expected: actual.len(),
            found: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(HarError::InvalidInput("rmse of zero points".into()));
    }
    let ss = predicted
        .iter()
        .zip(actual)
        .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
    Ok((ss / T::from_count(actual.len())).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_rows() {
        let f = write_tmp("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let d: Dataset<f64> = load_csv(f.path(), &TargetSelector::Last).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.features.ncols(), 2);
        assert_eq!(d.target, vec![3.0, 6.0, 9.0]);
        assert_eq!(d.feature_names, vec!["a", "b"]);
        assert_eq!(d.target_name, "y");
    }

    #[test]
    fn target_by_name() {
        let f = write_tmp("y,a,b\n3,1,2\n6,4,5\n");
        let d: Dataset<f64> = load_csv(f.path(), &TargetSelector::Name("y".into())).unwrap();
        assert_eq!(d.target, vec![3.0, 6.0]);
        assert_eq!(d.features.row(1), &[4.0, 5.0]);
        assert!(matches!(
            load_csv::<f64>(f.path(), &TargetSelector::Name("z".into())),
            Err(HarError::MissingTarget(_))
        ));
    }

    #[test]
    fn header_only_is_empty() {
        let f = write_tmp("a,b,y\n");
        assert!(matches!(
            load_csv::<f64>(f.path(), &TargetSelector::Last),
            Err(HarError::EmptyDataset)
        ));
    }

    #[test]
    fn blank_cell_drops_row() {
        let f = write_tmp("a,b,y\n1,2,3\n4,,6\n7,8,9\n");
        let d: Dataset<f64> = load_csv(f.path(), &TargetSelector::Last).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dropped_rows, 1);
        let f = write_tmp("a,b,y\n1,NaN,3\n4,5,6\n");
        let d: Dataset<f64> = load_csv(f.path(), &TargetSelector::Last).unwrap();
        assert_eq!(d.dropped_rows, 1);
    }

    #[test]
    fn non_numeric_column_is_named() {
        let f = write_tmp("a,color,y\n1,red,3\n");
        match load_csv::<f64>(f.path(), &TargetSelector::Last) {
            Err(HarError::NonNumericColumn(c)) => assert_eq!(c, "color"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file() {
        assert!(load_csv::<f64>("/nonexistent/file.csv", &TargetSelector::Last).is_err());
    }

    #[test]
    fn scaling_examples() {
        let train = DesignMatrix::column(vec![2.0, 4.0, 6.0]).unwrap();
        let params = fit_scaling(&train);
        let s = apply_scaling(&params, &train).unwrap();
        assert_eq!(s.as_slice(), &[0.0, 0.5, 1.0]);
        let test = DesignMatrix::column(vec![8.0, -1.0]).unwrap();
        assert_eq!(apply_scaling(&params, &test).unwrap().as_slice(), &[1.0, 0.0]);
        let constant = DesignMatrix::column(vec![5.0, 5.0, 5.0]).unwrap();
        let params = fit_scaling(&constant);
        assert_eq!(apply_scaling(&params, &constant).unwrap().as_slice(), &[0.5; 3]);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let s = split_indices(10, &SplitSpec::new(0.8, 3)).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        assert_eq!(s, split_indices(10, &SplitSpec::new(0.8, 3)).unwrap());
        assert_ne!(s, split_indices(10, &SplitSpec::new(0.8, 4)).unwrap());
        let s = split_indices(2, &SplitSpec::new(0.8, 1)).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (1, 1));
        assert!(split_indices(1, &SplitSpec::new(0.8, 1)).is_err());
        assert!(split_indices(10, &SplitSpec::new(1.0, 1)).is_err());
    }

    #[test]
    fn split_truncates_first() {
        let spec = SplitSpec {
            train_fraction: 0.8,
            seed: 11,
            max_rows: Some(2000),
        };
        let s = split_indices(5000, &spec).unwrap();
        assert_eq!(s.train.len() + s.test.len(), 2000);
        assert!(s.train.iter().chain(&s.test).all(|&i| i < 2000));
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!((rmse::<f64>(&[1.5, 2.5, 3.5], &[1.0, 2.0, 3.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rmse::<f64>(&[], &[]).is_err());
    }
}
