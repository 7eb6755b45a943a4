//! Error type shared across the engine.
//!
//! Variants map onto the CLI exit codes: input and parameter problems are
//! usage errors (exit 2), failed factorizations and other floating-point
//! breakdowns are numerical errors (exit 3), and loss-domain violations
//! (nonpositive draws under PDL, undefined risk ratios) are domain errors
//! (exit 4).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input data (parse failures, region
    /// mismatches, bad dimensions, missing files).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A parameter outside its valid range (rho outside bounds, tau <= 0,
    /// lambda = 0 for LINEX, bad sampler configuration).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Numerical degeneracy: a factorization failed or a quantity that must
    /// be finite is not.
    #[error("numerical degeneracy: {0}")]
    Numerical(String),

    /// Loss-domain violation, e.g. a nonpositive draw under PDL or a
    /// zero-risk denominator in a relative-risk ratio.
    #[error("domain error: {0}")]
    Domain(String),
}

impl Error {
    /// Process exit code for this error class (0 is success).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::InvalidParameter(_) => 2,
            Error::Numerical(_) => 3,
            Error::Domain(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::InvalidInput(e.to_string())
    }
}
