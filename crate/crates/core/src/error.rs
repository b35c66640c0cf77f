use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("non-finite value {value} at cell {cell}")]
    NonFinite { cell: usize, value: f64 },

    #[error("negative value {value} at cell {cell}; only nonnegative fields are supported here")]
    NegativeValue { cell: usize, value: f64 },

    #[error("invalid integrand: {0}")]
    InvalidIntegrand(String),

    #[error("capacity requires exponent p > 1, got p = {0}")]
    ExponentTooSmall(f64),

    #[error("inner set is not contained in outer set ({cells} cells of the inner set lie outside)")]
    NotNested { cells: usize },

    #[error("{0} is only defined on one-dimensional domains")]
    RequiresDim1(&'static str),

    #[error("invalid level grid: {0}")]
    InvalidLevels(String),

    #[error("induced value is unbounded at cell {0} (cell lies in the image of the empty set)")]
    Unbounded(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
