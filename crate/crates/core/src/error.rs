use std::path::PathBuf;

use thiserror::Error;

/// Every failure the engine can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("polarization undefined: {0}")]
    UndefinedPoli(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt corpus: {rejected} of {total} lines rejected (limit {limit:.1}%)")]
    CorruptCorpus {
        rejected: usize,
        total: usize,
        limit: f64,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("provider {provider} failed: {message}")]
    Provider { provider: String, message: String },

    #[error("training failed: {0}")]
    Train(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::UndefinedPoli(_) => "undefined_poli",
            Error::Data(_) => "data",
            Error::Sampling(_) => "sampling",
            Error::Io { .. } => "io",
            Error::CorruptCorpus { .. } => "corrupt_corpus",
            Error::Format(_) => "format",
            Error::Config(_) => "config",
            Error::Provider { .. } => "provider",
            Error::Train(_) => "train",
            Error::DegenerateSeries(_) => "degenerate_series",
            Error::Internal(_) => "internal",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
