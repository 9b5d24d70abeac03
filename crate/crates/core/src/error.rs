use alloc::string::String;

use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("duplicate entry at ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },
    #[error("address not present in sparsity pattern")]
    UnknownAddress,
    #[error("matrix does not share the pattern's structure")]
    PatternMismatch,
    #[error("negative off-diagonal rate {value} at ({row}, {col})")]
    NegativeRate { row: usize, col: usize, value: f64 },
    #[error("positive diagonal entry {value} in row {row}")]
    PositiveDiagonal { row: usize, value: f64 },
    #[error("row {row} sums to {sum}, expected 0")]
    RowSum { row: usize, sum: f64 },
    #[error("row {row} has off-diagonal mass but no stored diagonal")]
    MissingDiagonal { row: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("uniformization rate {eta} is below max |q_kk| = {required}")]
    RateTooSmall { eta: f64, required: f64 },
    #[error("eta*delta = {0} exceeds 700; exp(-eta*delta) underflows")]
    RateTooLarge(f64),
    #[error("tolerance must lie in (0, 1), got {0}")]
    InvalidTolerance(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid probability {value} at {what}")]
    InvalidProbability { what: &'static str, value: f64 },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("singular linear system")]
    Singular,
    #[error("iteration diverged after {iterations} steps (residual {residual}); try more warm-start sweeps")]
    Diverged { iterations: usize, residual: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("dense oracle limited to K <= {limit}, got {k}")]
    OracleTooLarge { k: usize, limit: usize },
    #[error("invalid data: {0}")]
    InvalidData(String),
}
