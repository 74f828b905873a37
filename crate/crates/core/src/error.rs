use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("orbit escaped the domain at step {0}")]
    OrbitEscaped(usize),

    #[error("point lies outside the system domain")]
    Domain,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("infeasible rectangle grid: {0}")]
    InfeasibleGrid(String),

    #[error("infeasible strip packing: {0}")]
    InfeasiblePacking(String),

    #[error("map is undefined at a verification sample point")]
    EvaluationEscaped,

    #[error("slab is not a strict horizontal subrectangle: {0}")]
    NotStrictHorizontal(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("malformed document: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
