//! Error taxonomy for the pipeline driver, mapped onto process exit codes.
//!
//! | code | meaning                                             |
//! |------|-----------------------------------------------------|
//! | 0    | success (possibly with per-stage errors in reports) |
//! | 1    | usage or configuration problem                      |
//! | 2    | data problem: missing/ill-formed input files        |
//! | 3    | a numerical stage failed outright                   |

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, row {row}, column `{column}`: {message}")]
    Schema {
        path: PathBuf,
        /// 1-based data row (the header is row 0).
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing prerequisite: {what} (expected at {path})")]
    MissingPrerequisite { what: String, path: PathBuf },

    #[error("{0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 1,
            CliError::Io { .. }
            | CliError::Schema { .. }
            | CliError::MissingPrerequisite { .. }
            | CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

/// Core-library failures split by nature: instability in a numerical routine
/// becomes exit code 3, everything else (shape mismatches, empty datasets,
/// out-of-range counts) is a data problem.
impl From<matchbias::Error> for CliError {
    fn from(e: matchbias::Error) -> Self {
        use matchbias::Error as E;
        match e {
            E::QuadratureFailure { .. }
            | E::IllConditioned { .. }
            | E::DegenerateFit(_)
            | E::NonFinite(_) => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}
