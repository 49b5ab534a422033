use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Variants map one-to-one onto the failure classes callers need to tell
/// apart: the CLI turns them into a stable `code`, the service into HTTP
/// statuses.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("imputation error: feature `{feature}` is missing in every record")]
    Imputation { feature: String },
    #[error("encoding error: unknown category `{value}` for `{feature}`")]
    Encoding { feature: String, value: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("state error: {0}")]
    State(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("artifact error: {0}")]
    Artifact(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable code, stable across releases.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Schema(_) => "schema",
            Error::Integrity(_) => "integrity",
            Error::Imputation { .. } => "imputation",
            Error::Encoding { .. } => "encoding",
            Error::Config(_) => "config",
            Error::Shape(_) => "shape",
            Error::Training(_) => "training",
            Error::Divergence { .. } => "divergence",
            Error::Evaluation(_) => "evaluation",
            Error::State(_) => "state",
            Error::Argument(_) => "argument",
            Error::Type(_) => "type",
            Error::Artifact(_) => "artifact",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
