use thiserror::Error;

use crate::expint::ExpIntError;
use crate::polytope::PolytopeError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
    #[error(transparent)]
    Integration(#[from] ExpIntError),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("polytope is not reflexive (some facet offset differs from 1)")]
    NotReflexive,
    #[error("no start converged within {iters} iterations (best gradient norm {grad_norm:e})")]
    MaxIters { iters: usize, grad_norm: f64 },
    #[error("centered Gram matrix is singular")]
    SingularGram,
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidParams(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
