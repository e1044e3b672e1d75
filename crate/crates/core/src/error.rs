use thiserror::Error;

use crate::grid::CellId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible grid constraints: {0}")]
    InfeasibleConstraints(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("level {level} out of range (grid depth {depth})")]
    LevelOutOfRange { level: usize, depth: usize },

    #[error("grid depth {depth} is insufficient, level {needed} required")]
    DepthInsufficient { needed: usize, depth: usize },

    #[error("cell {0} is a leaf")]
    LeafCell(CellId),

    #[error("invalid cell path {0}")]
    InvalidCell(CellId),

    #[error("invalid wavelet index {index} on cell {cell}")]
    InvalidWavelet { cell: CellId, index: usize },

    #[error("objects live on different grids")]
    GridMismatch,

    #[error("smoothness mismatch: {0} vs {1}")]
    SmoothnessMismatch(f64, f64),

    #[error("expected {expected} coefficients, got {found}")]
    WrongConvention {
        expected: &'static str,
        found: &'static str,
    },

    #[error("ratio undefined: zero norm")]
    UndefinedRatio,

    #[error("addresses coincide to depth {0}; a dipole needs two distinct points")]
    IdenticalAddress(usize),

    #[error("value vector has length {found}, level has {expected} cells")]
    LengthMismatch { expected: usize, found: usize },

    #[error("contract violated: {0}")]
    ContractViolation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
