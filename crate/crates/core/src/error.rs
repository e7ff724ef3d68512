use std::path::PathBuf;

use thiserror::Error;

/// Failure while evaluating `f` at a single point.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("dimension mismatch: expected {expected} {what} components, got {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite result in component {component} ({value})")]
    NonFiniteResult { component: usize, value: f64 },
}

/// Syntax error in a system definition. `line` is 1-based; for JSON
/// definitions it is the 1-based position of the expression in `f`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("f(0,0) is not the origin: |f(0,0)| = {norm:e}")]
    EquilibriumViolation { norm: f64 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("evaluation failed at flow step {step}: {source}")]
    FlowStep { step: usize, source: EvalError },
    #[error("evaluation failed at cell {cell}, input {input}: {source}")]
    Transition {
        cell: usize,
        input: usize,
        source: EvalError,
    },
    #[error("cell index {index} out of range (grid has {total} cells)")]
    IndexOutOfRange { index: usize, total: usize },
    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),
    #[error("non-finite Jacobian entry at ({row}, {col})")]
    NonFiniteJacobian { row: usize, col: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("Jacobian rank {rank} < {n} at iteration {iteration}")]
    SingularStep {
        iteration: usize,
        rank: usize,
        n: usize,
    },
    #[error("metadata mismatch on `{field}`: table has {table}, expected {expected}")]
    MetadataMismatch {
        field: String,
        table: String,
        expected: String,
    },
    #[error("malformed artifact {path}: {message}")]
    Artifact { path: String, message: String },
    #[error("unknown system `{0}`")]
    UnknownSystem(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
