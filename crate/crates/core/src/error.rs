//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node id {id} out of range for graph with {n} nodes")]
    NodeOutOfRange { id: usize, n: usize },

    #[error("self-loop on node {0} is not allowed")]
    SelfLoop(usize),

    #[error("negative weight {w} on edge ({i}, {j})")]
    NegativeWeight { i: usize, j: usize, w: f64 },

    #[error("edge ({0}, {1}) not present in graph")]
    EdgeNotFound(usize, usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("label {label} out of range for {k} clusters")]
    LabelOutOfRange { label: usize, k: usize },

    #[error("label vector has {got} entries, expected {expected}")]
    LabelLength { got: usize, expected: usize },

    #[error("matrix is not square: {0} x {1}")]
    NotSquare(usize, usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("requested rank {rank} exceeds matrix size {n}")]
    RankTooLarge { rank: usize, n: usize },

    #[error("eigen-solver did not converge: {wanted} pairs on n = {n} after {iters} iterations")]
    EigenNonConvergence {
        wanted: usize,
        n: usize,
        iters: usize,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
