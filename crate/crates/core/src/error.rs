use thiserror::Error;

use crate::estimators::EstimateResult;

pub type Result<T, E = TraceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{op} requires a square matrix, got {nrows}x{ncols}")]
    NotSquare {
        op: &'static str,
        nrows: usize,
        ncols: usize,
    },

    #[error("invalid sparse structure: {0}")]
    InvalidStructure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is singular to working precision (pivot {pivot:e} in column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("zero diagonal entry in row {row}")]
    ZeroDiagonal { row: usize },

    #[error("dimension {n} exceeds the dense limit {limit}{hint}")]
    TooLarge {
        n: usize,
        limit: usize,
        hint: &'static str,
    },

    #[error("hierarchy construction failed: {0}")]
    Hierarchy(String),

    #[error("aggregate {aggregate} is rank deficient (QR pivot {pivot:e})")]
    RankDeficientAggregate { aggregate: usize, pivot: f64 },

    #[error("solver did not converge within {iterations} iterations (relative residual {final_relres:e})")]
    NotConverged { iterations: usize, final_relres: f64 },

    #[error("eigensolver did not converge within {iterations} outer iterations (max residual {residual:e})")]
    EigenNotConverged { iterations: usize, residual: f64 },

    #[error("pilot scale tau = {tau} is not positive; rerun with an absolute tolerance")]
    NonPositiveTau { tau: f64 },

    #[error("sample budget of {budget} exhausted{}", level.map(|l| format!(" on level difference {l}")).unwrap_or_default())]
    BudgetExhausted {
        budget: usize,
        level: Option<usize>,
        partial: Box<EstimateResult>,
    },

    #[error("matrix market parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
