use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("line {line}: sample {sample_id}: {reason}")]
    InvalidRecord {
        line: usize,
        sample_id: String,
        reason: String,
    },

    #[error("invalid label map: {0}")]
    InvalidLabelMap(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("class {class} has no correctly classified training samples")]
    EmptyClass { class: String },

    #[error("cannot fit Weibull tail: {0}")]
    Unfittable(String),

    #[error("Weibull shape solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("class {class}: {cause}")]
    ClassFit { class: String, cause: Box<Error> },

    #[error("empty evaluation: no samples in the included classes")]
    EmptyEvaluation,

    #[error("no sweep rows for {0}")]
    MissingKey(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the numerical work itself (a tail that cannot
    /// be fitted, a class with no usable samples) rather than by bad input.
    pub fn is_computation(&self) -> bool {
        match self {
            Error::EmptyClass { .. }
            | Error::Unfittable(_)
            | Error::NonConvergence { .. }
            | Error::EmptyEvaluation => true,
            Error::ClassFit { cause, .. } => cause.is_computation(),
            _ => false,
        }
    }
}
