use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of a formula (zero distance, non-positive altitude, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown satellite (orbit {orbit}, slot {slot})")]
    UnknownSatellite { orbit: usize, slot: usize },

    /// Weight averaging needs every model to share one architecture.
    #[error("incompatible architecture: {0}")]
    IncompatibleArchitecture(String),

    /// Ensemble members must agree on the logit width.
    #[error("incompatible ensemble: {0}")]
    IncompatibleEnsemble(String),

    #[error("scenario infeasible: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

/// Failures while parsing IDX files. Offsets are byte offsets into the file.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("wrong magic number at offset {offset}: expected {expected:#010x}, found {found:#010x}")]
    WrongMagic {
        offset: usize,
        expected: u32,
        found: u32,
    },

    #[error("truncated file at offset {offset}: needed {needed} bytes, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("`{key}`: {message}")]
    Range { key: String, message: String },
}
