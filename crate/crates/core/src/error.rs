use std::path::PathBuf;

/// Errors produced by the model, solver, simulator and CLI layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no stable positive equilibrium: denominator {denominator} must be > 0")]
    NoEquilibrium { denominator: f64 },

    #[error(
        "grid needs an estimated {required_mb:.1} MiB ({rows} rows x {cols} cols x 2 tables), \
         cap is {cap_mb} MiB"
    )]
    GridTooLarge {
        rows: usize,
        cols: usize,
        required_mb: f64,
        cap_mb: f64,
    },

    #[error("corrupt value table {path}: {reason}")]
    CorruptTable { path: PathBuf, reason: String },

    #[error("config hash mismatch: table was built for {found}, requested config hashes to {expected}")]
    HashMismatch { expected: String, found: String },

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
