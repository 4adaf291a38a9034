use super::{
    factor_diagonal_blocks, sub_matvec, BatchedChunkVector, BlockBidiagonalSystem,
    DiagonalFactorization,
};
use crate::error::Result;

/// Forward block substitution: `x_1 = A_1⁻¹ y_1`, `x_{k+1} = A_{k+1}⁻¹ (y_{k+1} − B_k x_k)`.
pub fn solve_thomas(
    system: &BlockBidiagonalSystem,
    rhs: &BatchedChunkVector,
) -> Result<BatchedChunkVector> {
    system.check_rhs(rhs)?;
    let fact = factor_diagonal_blocks(system)?;
    Ok(thomas_factored(system, &fact, rhs))
}

pub(crate) fn thomas_factored(
    system: &BlockBidiagonalSystem,
    fact: &DiagonalFactorization,
    rhs: &BatchedChunkVector,
) -> BatchedChunkVector {
    let (n_chunk, n_batch, n) = (system.n_chunk(), system.n_batch(), system.n_size());
    let row = n_batch * n;
    let mut x = rhs.clone();
    let offdiag = system.offdiag();
    let off = offdiag.as_slice().expect("standard layout");
    let xs = x.data_mut().as_slice_mut().expect("standard layout");

    for b in 0..n_batch {
        fact.solve_in_place(0, b, &mut xs[b * n..(b + 1) * n]);
    }
    for k in 1..n_chunk {
        let (done, rest) = xs.split_at_mut(k * row);
        let prev = &done[(k - 1) * row..];
        let cur = &mut rest[..row];
        for b in 0..n_batch {
            let block = &off[((k - 1) * n_batch + b) * n * n..((k - 1) * n_batch + b + 1) * n * n];
            let xb = &mut cur[b * n..(b + 1) * n];
            sub_matvec(xb, block, &prev[b * n..(b + 1) * n], n);
            fact.solve_in_place(k, b, xb);
        }
    }
    x
}
