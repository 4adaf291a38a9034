use thiserror::Error;

use crate::model::JacobianStrategy;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("singular diagonal block at chunk {chunk}, batch {batch}")]
    SingularBlock { chunk: usize, batch: usize },

    #[error("singular dense matrix in batch {batch}")]
    SingularMatrix { batch: usize },

    #[error("{what}: size {size} exceeds guard limit {limit}")]
    SizeGuard {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("jacobian strategy {0:?} is not available for this model")]
    StrategyUnavailable(JacobianStrategy),

    #[error("non-finite value in {what}{}", time_index.map(|i| format!(" at time index {i}")).unwrap_or_default())]
    NonFiniteOutput {
        what: &'static str,
        time_index: Option<usize>,
    },

    #[error(
        "newton failed to converge for the chunk starting at time index {time_index}: \
         batch {batch} residual {residual:e} (initial {initial_residual:e}) after {iterations} iterations"
    )]
    NewtonDivergence {
        time_index: usize,
        batch: usize,
        residual: f64,
        initial_residual: f64,
        iterations: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
