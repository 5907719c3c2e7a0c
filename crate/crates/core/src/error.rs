use std::path::PathBuf;

use thiserror::Error;

/// A rejected configuration value, carrying the offending field name.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: &'static str,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            field,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecourseError {
    #[error("feature dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("threshold {threshold} is unreachable inside the unit box (best attainable score {best})")]
    Infeasible { threshold: f64, best: f64 },
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("unknown agent id {0}")]
    UnknownAgent(u64),
    #[error("runs differ in non-effort configuration field `{0}`")]
    MismatchedConfigs(&'static str),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Recourse(#[from] RecourseError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config file error: {0}")]
    ConfigFile(String),
    #[error("{0}")]
    Harness(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::ConfigFile(_) => "config",
            Error::Recourse(_) => "recourse",
            Error::Metrics(_) => "metrics",
            Error::Io { .. } => "io",
            Error::Csv(_) | Error::Json(_) => "format",
            Error::Harness(_) => "harness",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
