use std::path::{Path, PathBuf};

use qegm_core::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} already exists; pass --force to overwrite")]
    Exists(PathBuf),
    #[error("comparison invalid: {0}")]
    ComparisonInvalid(String),
    #[error("{0}")]
    Usage(String),
}

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => EXIT_IO,
            CliError::Exists(_) | CliError::ComparisonInvalid(_) | CliError::Usage(_) => EXIT_VALIDATION,
            CliError::Core(e) => match e {
                Error::Io(_) | Error::EntropyExhausted { .. } => EXIT_IO,
                Error::Numeric(_) | Error::NonFiniteLoss { .. } | Error::UndefinedMetric(_) => EXIT_NUMERIC,
                _ => EXIT_VALIDATION,
            },
        }
    }
}
