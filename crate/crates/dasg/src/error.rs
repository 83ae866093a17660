use thiserror::Error;

/// Errors produced by this crate, grouped so callers can map them to
/// exit codes: argument/usage problems, data problems, numerical problems.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("node {node} is degenerate: {detail}")]
    DegenerateNode { node: usize, detail: String },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("enumeration cap exceeded: {0}")]
    CapExceeded(String),
}

impl Error {
    /// Process exit code contract: 1 usage/validation, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::CapExceeded(_) => 1,
            Error::Data(_) | Error::Io(_) => 2,
            Error::DegenerateNode { .. }
            | Error::NotPositiveDefinite(_)
            | Error::Singular(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
