use std::path::PathBuf;

/// Errors raised by the toolkit.
///
/// Variants are grouped by the exit-code family the CLI maps them to:
/// data problems (2), model/configuration problems (3).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("capability unavailable: missing {artifact}")]
    Capability { artifact: String },

    #[error("stale feature cache {path}: expected fingerprint {expected}, found {found}")]
    StaleCache {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("digest mismatch for {what}: {left} != {right}")]
    DigestMismatch { what: String, left: String, right: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 1 usage, 2 data, 3 model/config.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Schema(_) | Error::Data(_) | Error::Io { .. } | Error::Json(_) | Error::Csv(_) => 2,
            Error::Config(_)
            | Error::Numeric(_)
            | Error::Capability { .. }
            | Error::StaleCache { .. }
            | Error::DigestMismatch { .. } => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
