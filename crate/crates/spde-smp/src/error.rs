use thiserror::Error;

/// Crate-wide error type. The variants map onto process exit codes: invalid
/// input 2, numerical failure 3, violated invariant 1.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad user input: unknown preset, out-of-range parameter, malformed config.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// Objects that must share a grid, time grid, or ensemble do not.
    #[error("mismatch: {0}")]
    Mismatch(String),
    /// Runtime numerical failure: state blow-up, ill-conditioned regression.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A checked invariant failed during a run.
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invariant(_) => 1,
            Error::Invalid(_) | Error::Mismatch(_) => 2,
            Error::Numerical(_) => 3,
            Error::Io(_) => 3,
        }
    }

    /// Stable machine-readable kind tag used in error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Invalid(_) => "invalid_input",
            Error::Mismatch(_) => "mismatch",
            Error::Numerical(_) => "numerical_failure",
            Error::Invariant(_) => "invariant_violation",
            Error::Io(_) => "io_error",
        }
    }
}
