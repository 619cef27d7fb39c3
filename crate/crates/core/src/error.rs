use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("expected {expected} domain, got {found}")]
    Domain {
        expected: &'static str,
        found: &'static str,
    },

    #[error("channel error: expected {expected} channels, got {found}")]
    Channels { expected: usize, found: usize },

    #[error("shape error at {stage}: {detail}")]
    Shape { stage: String, detail: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid mask spec: {0}")]
    MaskSpec(String),

    #[error("contrast prior has no range for tissue label {0}")]
    Prior(u8),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at step {step}: {detail}")]
    Training { step: u64, detail: String },

    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("report incomplete, missing: {}", .0.join(", "))]
    MissingArtifacts(Vec<String>),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(stage: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Shape {
            stage: stage.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl AsRef<std::path::Path>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            detail: detail.into(),
        }
    }

    /// Process exit status for this error class: 3 for I/O and malformed files, 4 for everything
    /// that is a validation failure. Flag parsing (2) is handled by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Format { .. } => 3,
            _ => 4,
        }
    }
}
