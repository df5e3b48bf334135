use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{source_name}: parse error at byte {offset}: {message}")]
    Parse {
        source_name: String,
        offset: usize,
        message: String,
    },

    #[error("{source_name}: format error: {message}")]
    Format {
        source_name: String,
        message: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("cannot impute: {0}")]
    CannotImpute(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(source_name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            source_name: source_name.into(),
            message: message.into(),
        }
    }
}
