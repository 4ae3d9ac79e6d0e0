use std::path::PathBuf;

use crate::graph::SpectralBasis;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at line {line}: {reason}")]
    Malformed { line: usize, reason: String },

    #[error("zero interactions after parsing")]
    NoInteractions,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rank {rank} exceeds operator dimension {dim}")]
    RankTooLarge { rank: usize, dim: usize },

    #[error("eigensolver did not converge within {cycles} restart cycles (max residual {max_residual:e})")]
    NotConverged {
        cycles: usize,
        max_residual: f64,
        basis: Box<SpectralBasis>,
    },

    #[error("instance with {n} items exceeds the dense limit of {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("decode error: {0}")]
    Decode(String),

    #[error("hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("protocol violation: user {user} was recommended excluded item {item}")]
    ProtocolViolation { user: usize, item: u32 },

    #[error("user {0} has an empty condition vector")]
    EmptyCondition(usize),

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged {
        epoch: usize,
        last_good: Box<crate::denoiser::Checkpoint>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier, used for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Malformed { .. } => "malformed",
            Error::NoInteractions => "no-interactions",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::RankTooLarge { .. } => "rank-too-large",
            Error::NotConverged { .. } => "not-converged",
            Error::TooLarge { .. } => "too-large",
            Error::Decode(_) => "decode",
            Error::HashMismatch { .. } => "hash-mismatch",
            Error::NonFinite(_) => "non-finite",
            Error::ProtocolViolation { .. } => "protocol-violation",
            Error::EmptyCondition(_) => "empty-condition",
            Error::Diverged { .. } => "diverged",
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
