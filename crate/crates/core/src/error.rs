use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("solver did not converge after {iterations} iterations (kkt residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("unseparable at ambient dimension {dim} (p_hat = {p_hat})")]
    Unseparable { dim: usize, p_hat: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("draw {draw}: {source}")]
    InDraw {
        draw: u64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn in_draw(self, draw: u64) -> Error {
        Error::InDraw { draw, source: Box::new(self) }
    }

    /// True for errors caused by bad caller input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Empty(_)
            | Error::DimensionMismatch { .. }
            | Error::NonFinite { .. }
            | Error::InvalidArgument(_) => true,
            Error::InDraw { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}
