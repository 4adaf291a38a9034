use nalgebra::{DMatrix, DVector};
use ndarray::s;

use super::{BatchedChunkVector, BlockBidiagonalSystem};
use crate::error::{Error, Result};

/// Largest assembled dimension `n_chunk · n_size` the oracle will accept.
pub const DENSE_ORACLE_LIMIT: usize = 512;

/// Reference solve: assembles each batch entry's full matrix and solves it
/// with a general dense LU. Only meant for testing the block solvers.
pub fn solve_dense_oracle(
    system: &BlockBidiagonalSystem,
    rhs: &BatchedChunkVector,
) -> Result<BatchedChunkVector> {
    system.check_rhs(rhs)?;
    let (n_chunk, n_batch, n) = (system.n_chunk(), system.n_batch(), system.n_size());
    let dim = n_chunk * n;
    if dim > DENSE_ORACLE_LIMIT {
        return Err(Error::SizeGuard {
            what: "dense oracle",
            size: dim,
            limit: DENSE_ORACLE_LIMIT,
        });
    }
    let mut out = BatchedChunkVector::zeros(n_chunk, n_batch, n);
    for b in 0..n_batch {
        let dense = system.assemble_dense(b);
        let matrix = DMatrix::from_fn(dim, dim, |i, j| dense[[i, j]]);
        let y = rhs.data().slice(s![.., b, ..]);
        let vector = DVector::from_iterator(dim, y.iter().copied());
        let x = matrix
            .lu()
            .solve(&vector)
            .filter(|x| x.iter().all(|v| v.is_finite()))
            .ok_or(Error::SingularMatrix { batch: b })?;
        for k in 0..n_chunk {
            for i in 0..n {
                out.data_mut()[[k, b, i]] = x[k * n + i];
            }
        }
    }
    Ok(out)
}
