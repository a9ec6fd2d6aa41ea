use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("unsupported problem: {0}")]
    UnsupportedProblem(String),

    #[error("missing problem constant `{0}`")]
    MissingConstant(&'static str),

    /// A bound was requested for a stepsize outside its admissible range.
    #[error("inadmissible stepsize h = {h}: {bound} requires {condition}")]
    Inadmissible {
        bound: &'static str,
        condition: String,
        h: f64,
    },

    #[error("ensemble failed: {diverged} of {total} paths diverged")]
    EnsembleDiverged { diverged: usize, total: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
