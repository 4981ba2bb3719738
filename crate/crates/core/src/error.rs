//! Error type shared across the toolkit.

/// Errors produced by the analysis core.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value is outside the operation's domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Structurally inconsistent inputs (mismatched shapes, foreign indices,
    /// decompositions that do not reconstruct their ensemble).
    #[error("structural error: {0}")]
    Structure(String),
    /// An ensemble whose weights carry no mass.
    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),
    /// CSV ingestion failure, pointing at the offending cell.
    #[error("ingestion error at row {row}, column {column}: {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },
    /// An iterative solver exhausted its iteration cap.
    #[error("numerical non-convergence in {0}")]
    NonConvergence(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code contract: 3 for numerical-convergence failures,
    /// 2 for everything else (validation, structure, I/O).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence(_) => 3,
            _ => 2,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn structure(msg: impl Into<String>) -> Error {
    Error::Structure(msg.into())
}
