use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left is {lhs_rows}x{lhs_cols}, right is {rhs_rows}x{rhs_cols}")]
    ShapeMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("feature row {row} has zero norm; cosine similarity is undefined")]
    DegenerateFeature { row: usize },

    #[error("negative intensity {value} at ({row},{col}); clamping belongs upstream")]
    NegativeIntensity { row: usize, col: usize, value: f64 },

    #[error("negative entry {value} at ({row},{col}); adjacency input must be nonnegative")]
    NegativeAdjacency { row: usize, col: usize, value: f64 },

    #[error("adjacency diagonal entry at ({idx},{idx}) must be zero, got {value}")]
    NonzeroDiagonal { idx: usize, value: f64 },

    #[error("target row {row} is not one-hot")]
    NotOneHot { row: usize },

    #[error("stale cache: parameters differ from the ones captured at forward time")]
    StaleCache,

    #[error("graph enumeration is capped at n <= {cap} nodes, got n = {n}")]
    EnumerationCap { n: usize, cap: usize },

    #[error("probe returned a non-finite value at coordinate {coordinate}")]
    NonFiniteProbe { coordinate: usize },

    #[error("dataset error: {0}")]
    Data(String),

    #[error("parse error at byte {offset}: {message}")]
    IdxParse { offset: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
