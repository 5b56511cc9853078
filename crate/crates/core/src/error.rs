use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("linear system is singular; last diagonal jitter tried was {jitter:e}")]
    SingularSystem { jitter: f64 },

    #[error("outcome vector is identically zero, regularization scale is undefined")]
    UndefinedScale,

    #[error("dataset has no usable rows")]
    EmptyDataset,

    #[error("column `{0}` is not numeric")]
    NonNumericColumn(String),

    #[error("target column `{0}` not found")]
    MissingTarget(String),

    #[error("feature schema mismatch: model expects [{expected}], input has [{found}]")]
    SchemaMismatch { expected: String, found: String },

    #[error("unsupported model format version {0}")]
    FormatVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarError {
    /// Stable machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            HarError::DimensionMismatch { .. } => "dimension_mismatch",
            HarError::InvalidInput(_) => "invalid_input",
            HarError::InvalidParameter { .. } => "invalid_parameter",
            HarError::Unsupported(_) => "unsupported",
            HarError::SingularSystem { .. } => "singular_system",
            HarError::UndefinedScale => "undefined_scale",
            HarError::EmptyDataset => "empty_dataset",
            HarError::NonNumericColumn(_) => "non_numeric_column",
            HarError::MissingTarget(_) => "missing_target",
            HarError::SchemaMismatch { .. } => "schema_mismatch",
            HarError::FormatVersion(_) => "format_version",
            HarError::Io(_) => "io",
            HarError::Csv(_) => "csv",
            HarError::Json(_) => "json",
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        HarError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = HarError> = std::result::Result<T, E>;
