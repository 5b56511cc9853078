//! Versioned JSON persistence of fitted models.
//!
//! Floats are written in shortest round-trip form, so a saved model reloads
//! with bit-identical coefficients and therefore bit-identical predictions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ScalingParams;
use crate::error::{HarError, Result};
use crate::kernels::KernelSpec;
use crate::matrix::DesignMatrix;
use crate::scalar::Scalar;
use crate::solver::{FittedModel, YStats};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct KnotBlock<T> {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ModelDocument<T> {
    pub format_version: u32,
    pub kernel: KernelSpec<T>,
    pub lambda: T,
    #[serde(default)]
    pub jitter: T,
    pub scaling: Option<ScalingParams<T>>,
    pub knots: KnotBlock<T>,
    pub alpha: Vec<T>,
    pub y_stats: YStats<T>,
    pub gram_fingerprint: String,
    #[serde(default)]
    pub feature_names: Vec<String>,
    #[serde(default)]
    pub target_name: Option<String>,
    /// Configuration of the run that produced the model.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub run_config: serde_json::Value,
}

impl<T: Scalar> ModelDocument<T> {
    pub fn from_model(model: &FittedModel<T>) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            kernel: model.spec,
            lambda: model.lambda,
            jitter: model.jitter,
            scaling: model.scaling.clone(),
            knots: KnotBlock {
                rows: model.knots.nrows(),
                cols: model.knots.ncols(),
                values: model.knots.as_slice().to_vec(),
            },
            alpha: model.alpha.clone(),
            y_stats: model.y_stats,
            gram_fingerprint: model.knot_fingerprint.clone(),
            feature_names: Vec::new(),
            target_name: None,
            run_config: serde_json::Value::Null,
        }
    }

    pub fn to_model(&self) -> Result<FittedModel<T>> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(HarError::FormatVersion(self.format_version));
        }
        self.kernel.validate()?;
        let knots = DesignMatrix::new(self.knots.rows, self.knots.cols, self.knots.values.clone())?;
        if self.alpha.len() != knots.nrows() {
            return Err(HarError::DimensionMismatch {
                expected: knots.nrows(),
                found: self.alpha.len(),
            });
        }
        let fingerprint = knots.fingerprint();
        if fingerprint != self.gram_fingerprint {
            return Err(HarError::InvalidInput(format!(
                "knot fingerprint mismatch: stored {}, computed {fingerprint}",
                self.gram_fingerprint
            )));
        }
        if let Some(s) = &self.scaling {
            if s.ranges.len() != knots.ncols() {
                return Err(HarError::DimensionMismatch {
                    expected: knots.ncols(),
                    found: s.ranges.len(),
                });
            }
        }
        Ok(FittedModel {
            knots,
            scaling: self.scaling.clone(),
            spec: self.kernel,
            lambda: self.lambda,
            jitter: self.jitter,
            alpha: self.alpha.clone(),
            y_stats: self.y_stats,
            knot_fingerprint: fingerprint,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
