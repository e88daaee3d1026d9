use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("length mismatch: expected {expected}, got {actual}")]
    Length { expected: usize, actual: usize },

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("exhaustive enumeration needs n_exp <= {max}, got {n_exp}")]
    TooLarge { n_exp: u32, max: u32 },

    #[error("invalid parameter: {0}")]
    Invalid(String),

    #[error("merge alphabet of {requested} classes exceeds the budget of {budget}")]
    Resource { requested: usize, budget: usize },

    #[error("systematic encoding is singular on the key set")]
    Singular,

    #[error("QBER {p_m} is not admissible (secrecy capacity {c_sec} < 0)")]
    Inadmissible { p_m: f64, c_sec: f64 },

    #[error("code structure digest mismatch: local {local:016x}, remote {remote:016x}")]
    DigestMismatch { local: u64, remote: u64 },

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }
}
