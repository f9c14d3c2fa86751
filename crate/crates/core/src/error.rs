//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration supplied by the caller (bad flags, parameters,
    /// role maps, penalty settings).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data (CSV cells, dimension mismatches
    /// in user-supplied datasets).
    #[error("data error: {0}")]
    Data(String),

    /// Dimensions of the supplied objects do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A design matrix (or restricted block of one) is rank deficient.
    #[error("rank deficiency: {context} (block of {size} columns has rank {rank})")]
    RankDeficient {
        context: String,
        size: usize,
        rank: usize,
    },

    /// A matrix that must be invertible / positive definite is singular.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// The Jacobian of the moment system is too close to singular for the
    /// target parameter to be identified.
    #[error("weak identification: {0}")]
    WeakIdentification(String),

    /// Instrument selection returned an empty set.
    #[error("no instruments selected")]
    NoInstrumentsSelected,

    /// A non-finite value (NaN or infinity) was encountered.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 for configuration errors, 2 for
    /// data/numeric errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
