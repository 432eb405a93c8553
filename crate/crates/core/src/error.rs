use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("precomputed kernel has no closed form; supply the Gram matrix")]
    PrecomputedKernel,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("labels must be +1 or -1 (found {0} at index {1})")]
    InvalidLabel(i64, usize),

    #[error("both classes must be present")]
    SingleClass,

    #[error("provisional labels are required in predicted-label mode")]
    MissingProvisionalLabels,

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("solver did not converge in {iterations} iterations (kkt residual {kkt_residual:e})")]
    NotConverged { iterations: u64, kkt_residual: f64 },

    #[error("problem too large for enumeration: n = {n} (limit {limit})")]
    TooLarge { n: usize, limit: usize },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::PrecomputedKernel => "precomputed_kernel",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Empty(_) => "empty_input",
            Error::NonFinite => "non_finite",
            Error::NotSymmetric { .. } => "not_symmetric",
            Error::InvalidLabel(..) => "invalid_label",
            Error::SingleClass => "single_class",
            Error::MissingProvisionalLabels => "missing_provisional_labels",
            Error::Infeasible(_) => "infeasible",
            Error::NotConverged { .. } => "not_converged",
            Error::TooLarge { .. } => "too_large",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }
}
