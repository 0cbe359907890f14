use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// The variants are grouped so a front end can map them onto a small set of
/// exit codes: configuration problems, I/O problems, and numeric or data
/// integrity problems.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("bag has no patches")]
    EmptyBag,

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("parse error in {}: field `{field}`: {message}", file.display())]
    Parse {
        file: PathBuf,
        field: String,
        message: String,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("insufficient foreground: {found} valid patch positions, {required} required")]
    InsufficientForeground { found: usize, required: usize },

    #[error("size error: {0}")]
    Size(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        file: impl Into<PathBuf>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            file: file.into(),
            field: field.into(),
            message: message.into(),
        }
    }

    /// Coarse category used by command-line front ends.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config { .. } | Error::Parse { .. } | Error::SchemaMismatch { .. } => {
                ErrorKind::Config
            }
            Error::Io { .. } => ErrorKind::Io,
            Error::Dimension { .. }
            | Error::EmptyBag
            | Error::Numeric(_)
            | Error::Contract(_)
            | Error::Integrity(_)
            | Error::DegenerateInput(_)
            | Error::InsufficientForeground { .. }
            | Error::Size(_) => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Io,
    Data,
}
