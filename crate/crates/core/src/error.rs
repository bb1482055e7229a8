//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown quantile family `{0}`")]
    UnknownFamily(String),

    /// A target quantile collapsed to a constant (zero after centering).
    #[error("degenerate quantile: {0}")]
    DegenerateQuantile(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("numeric failure in {context}")]
    Numeric { context: String },

    #[error("oracle limited to p <= {max}, got p = {p}")]
    OracleTooLarge { p: usize, max: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numeric(context: impl Into<String>) -> Self {
        Error::Numeric {
            context: context.into(),
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::UnknownFamily(_)
            | Error::DegenerateLabels(_)
            | Error::OracleTooLarge { .. }
            | Error::Json(_) => 2,
            Error::Csv(e) if e.is_io_error() => 4,
            Error::Csv(_) => 2,
            Error::DegenerateQuantile(_) | Error::Numeric { .. } => 3,
            Error::Io(_) => 4,
        }
    }

    /// A copy for fanning one failure out to several results. Wrapped
    /// library errors keep their message and exit code but not their source.
    pub(crate) fn duplicate(&self) -> Self {
        match self {
            Error::InvalidInput(m) => Error::InvalidInput(m.clone()),
            Error::DimensionMismatch { expected, found } => Error::DimensionMismatch {
                expected: *expected,
                found: *found,
            },
            Error::UnknownFamily(m) => Error::UnknownFamily(m.clone()),
            Error::DegenerateQuantile(m) => Error::DegenerateQuantile(m.clone()),
            Error::DegenerateLabels(m) => Error::DegenerateLabels(m.clone()),
            Error::Numeric { context } => Error::numeric(context.clone()),
            Error::OracleTooLarge { p, max } => Error::OracleTooLarge { p: *p, max: *max },
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), e.to_string())),
            Error::Csv(e) if e.is_io_error() => {
                Error::Io(std::io::Error::other(e.to_string()))
            }
            Error::Json(_) | Error::Csv(_) => Error::InvalidInput(self.to_string()),
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
