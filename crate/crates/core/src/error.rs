use std::path::PathBuf;

use thiserror::Error;

use crate::isfd::TraceEntry;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent or missing configuration (scenario files, plans, models).
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    /// Input whose second-order statistics admit no whitening filter.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training diverged at iteration {iteration}: {message}")]
    TrainingDiverged { iteration: usize, message: String },

    #[error("innovation stream ended after {consumed} samples, {required} required")]
    TruncatedStream {
        consumed: usize,
        required: usize,
        trace: Vec<TraceEntry>,
    },

    #[error("no calibration grid point reaches FPR {target}; best achieved {best_fpr}")]
    CalibrationInfeasible { target: f64, best_fpr: f64 },

    #[error("experiment aborted: {failed} of {total} runs failed (first: {first})")]
    ExperimentAborted {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("malformed blob: {0}")]
    Blob(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),

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

    /// True for errors caused by the caller's configuration or arguments
    /// rather than by the data or the environment.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Argument(_) | Error::TomlDe(_) | Error::TomlSer(_)
        )
    }
}
