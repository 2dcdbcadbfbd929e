use thiserror::Error;

use crate::types::TraceEntry;

#[derive(Debug, Error)]
pub enum Error {
    #[error("regularization parameters must be positive, got ({0:e}, {1:e})")]
    InvalidParams(f64, f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("linear system is singular or not positive definite")]
    Singular,

    #[error("unknown kernel id `{0}`")]
    UnknownKernel(String),

    #[error("value function vanishes at ({0:e}, {1:e}); phi_gamma is undefined")]
    DegenerateValue(f64, f64),

    #[error("penalty psi{index} collapsed to {value:e} at outer iteration {iter}")]
    PenaltyDegenerate { index: usize, value: f64, iter: usize },

    #[error("Broyden Jacobian became singular at iteration {iter}")]
    SingularJacobian { iter: usize, trace: Vec<TraceEntry> },

    #[error("problem carries no exact solution")]
    MissingTruth,

    #[error("exact solution is identically zero")]
    ZeroTruth,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
