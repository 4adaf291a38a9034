//! Parallel cyclic reduction for lower block-bidiagonal systems.
//!
//! Write row `k` of the system as `A_k x_k + C_k x_{k-s} = y_k`, where `s`
//! is the current stride (initially `C_k = B_{k-1}`, `s = 1`). Substituting
//! row `k - s` eliminates `x_{k-s}`:
//!
//! ```text
//! C_k ← −C_k A_{k−s}⁻¹ C_{k−s}
//! y_k ← y_k − C_k A_{k−s}⁻¹ y_{k−s}
//! ```
//!
//! after which row `k` couples to `x_{k−2s}`. The diagonal blocks never
//! change, so their LU factors are computed once. After `log2(n)` sweeps every
//! coupling points before the first row and `x_k = A_k⁻¹ y_k`.
//!
//! A sweep at stride `s` acts on `s` independent subsystems (every `s`-th row).
//! These are exposed without copying by viewing the `(len, …)` chunk axis as
//! `(len / s, s, …)`: axis 0 walks a subsystem, axis 1 selects it.
//!
//! Chunk counts that are not a power of two are split into descending powers
//! of two (`7 = 4 + 2 + 1`). Partitions are reduced one after another; the
//! coupling from a partition's first row into the previous, already solved
//! partition is moved to the right-hand side first.

use ndarray::{s, Array3, Array4, ArrayView4, ArrayViewMut3, ArrayViewMut4, Axis};

use super::{
    factor_diagonal_blocks, sub_matvec, BatchedChunkVector, BlockBidiagonalSystem,
    DiagonalFactorization,
};
use crate::error::Result;

/// Instrumentation for the reduction phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PcrStats {
    /// Reduction sweeps executed, summed over all power-of-two partitions.
    pub sweeps: usize,
}

/// Decomposes `n` into distinct powers of two, largest first.
pub fn power_of_two_partitions(n: usize) -> Vec<usize> {
    (0..usize::BITS)
        .rev()
        .map(|e| 1usize << e)
        .filter(|p| n & p != 0)
        .collect()
}

pub fn solve_pcr(
    system: &BlockBidiagonalSystem,
    rhs: &BatchedChunkVector,
) -> Result<BatchedChunkVector> {
    solve_pcr_with_stats(system, rhs).map(|(x, _)| x)
}

pub fn solve_pcr_with_stats(
    system: &BlockBidiagonalSystem,
    rhs: &BatchedChunkVector,
) -> Result<(BatchedChunkVector, PcrStats)> {
    cyclic_reduction(system, rhs, usize::MAX)
}

/// Runs at most `n_switch` reduction sweeps per partition, then finishes each
/// remaining strided subsystem with forward substitution.
///
/// `n_switch = 0` is Thomas's algorithm on each partition; any
/// `n_switch ≥ ceil(log2 n_chunk)` is full PCR.
pub fn solve_hybrid(
    system: &BlockBidiagonalSystem,
    rhs: &BatchedChunkVector,
    n_switch: usize,
) -> Result<BatchedChunkVector> {
    cyclic_reduction(system, rhs, n_switch).map(|(x, _)| x)
}

fn cyclic_reduction(
    system: &BlockBidiagonalSystem,
    rhs: &BatchedChunkVector,
    max_sweeps: usize,
) -> Result<(BatchedChunkVector, PcrStats)> {
    system.check_rhs(rhs)?;
    let fact = factor_diagonal_blocks(system)?;
    let (n_chunk, n_batch, n) = (system.n_chunk(), system.n_batch(), system.n_size());

    // coupling[k] multiplies x_{k-1} initially; coupling[0] is empty.
    let mut coupling = Array4::zeros((n_chunk, n_batch, n, n));
    coupling
        .slice_mut(s![1.., .., .., ..])
        .assign(&system.offdiag());
    let mut y = rhs.data().clone();
    let mut x = Array3::zeros((n_chunk, n_batch, n));
    let mut stats = PcrStats::default();

    let mut start = 0;
    for len in power_of_two_partitions(n_chunk) {
        if start > 0 {
            for b in 0..n_batch {
                let c = coupling.slice(s![start, b, .., ..]);
                let xprev = x.slice(s![start - 1, b, ..]);
                let mut yb = y.slice_mut(s![start, b, ..]);
                sub_matvec(
                    yb.as_slice_mut().expect("contiguous"),
                    c.as_slice().expect("contiguous"),
                    xprev.as_slice().expect("contiguous"),
                    n,
                );
            }
            coupling.slice_mut(s![start, .., .., ..]).fill(0.0);
        }

        let depth = len.trailing_zeros() as usize;
        let mut stride = 1;
        let mut cpl = coupling.slice_mut(s![start..start + len, .., .., ..]);
        let mut yp = y.slice_mut(s![start..start + len, .., ..]);
        for _ in 0..depth.min(max_sweeps) {
            reduce_sweep(cpl.view_mut(), yp.view_mut(), &fact, start, stride);
            stride *= 2;
            stats.sweeps += 1;
        }
        strided_substitution(cpl.view(), yp.view_mut(), &fact, start, stride);
        x.slice_mut(s![start..start + len, .., ..]).assign(&yp);
        start += len;
    }
    Ok((BatchedChunkVector::from(x), stats))
}

/// One reduction sweep at `stride` over a power-of-two partition beginning at
/// chunk index `start`. Rows are visited from last to first within each
/// subsystem so that every update reads pre-sweep values of its predecessor.
fn reduce_sweep(
    coupling: ArrayViewMut4<f64>,
    y: ArrayViewMut3<f64>,
    fact: &DiagonalFactorization,
    start: usize,
    stride: usize,
) {
    let (len, n_batch, n, _) = coupling.dim();
    let rows = len / stride;
    let mut cpl = coupling
        .into_shape_with_order((rows, stride, n_batch, n, n))
        .expect("partition is contiguous");
    let mut yv = y
        .into_shape_with_order((rows, stride, n_batch, n))
        .expect("partition is contiguous");

    let w = n + 1;
    let mut scratch = vec![0.0; n * w];
    let mut updated = vec![0.0; n * n];
    for m in (1..rows).rev() {
        let (c_lo, mut c_hi) = cpl.view_mut().split_at(Axis(0), m);
        let (y_lo, mut y_hi) = yv.view_mut().split_at(Axis(0), m);
        let c_prev = c_lo.index_axis_move(Axis(0), m - 1);
        let y_prev = y_lo.index_axis_move(Axis(0), m - 1);
        let mut c_cur = c_hi.index_axis_mut(Axis(0), 0);
        let mut y_cur = y_hi.index_axis_mut(Axis(0), 0);
        let c_prev = c_prev.as_slice().expect("contiguous");
        let y_prev = y_prev.as_slice().expect("contiguous");
        let c_cur = c_cur.as_slice_mut().expect("contiguous");
        let y_cur = y_cur.as_slice_mut().expect("contiguous");

        for j in 0..stride {
            let k_prev = start + (m - 1) * stride + j;
            for b in 0..n_batch {
                let blk = j * n_batch + b;
                let cp = &c_prev[blk * n * n..(blk + 1) * n * n];
                let yp = &y_prev[blk * n..(blk + 1) * n];
                // scratch = A_prev⁻¹ [C_prev | y_prev]
                for r in 0..n {
                    scratch[r * w..r * w + n].copy_from_slice(&cp[r * n..(r + 1) * n]);
                    scratch[r * w + n] = yp[r];
                }
                fact.solve_matrix_in_place(k_prev, b, &mut scratch, w);

                let cc = &mut c_cur[blk * n * n..(blk + 1) * n * n];
                let yc = &mut y_cur[blk * n..(blk + 1) * n];
                for r in 0..n {
                    let crow = &cc[r * n..(r + 1) * n];
                    let mut acc_y = 0.0;
                    for l in 0..n {
                        acc_y += crow[l] * scratch[l * w + n];
                    }
                    yc[r] -= acc_y;
                    for c in 0..n {
                        let mut acc = 0.0;
                        for l in 0..n {
                            acc += crow[l] * scratch[l * w + c];
                        }
                        updated[r * n + c] = -acc;
                    }
                }
                cc.copy_from_slice(&updated);
            }
        }
    }
}

/// Solves the `stride` independent subsystems left after reduction, in place
/// on `y`. With full reduction each subsystem is a single row.
fn strided_substitution(
    coupling: ArrayView4<f64>,
    mut y: ArrayViewMut3<f64>,
    fact: &DiagonalFactorization,
    start: usize,
    stride: usize,
) {
    let (len, n_batch, n, _) = coupling.dim();
    let rows = len / stride;
    let cpl = coupling.as_slice().expect("contiguous");
    let ys = y.as_slice_mut().expect("contiguous");
    // (m, j, b) ↦ (m·stride + j)·n_batch + b, i.e. the (rows, stride) view.
    let row = stride * n_batch * n;
    for m in 0..rows {
        let (done, rest) = ys.split_at_mut(m * row);
        let cur = &mut rest[..row];
        for j in 0..stride {
            let k = start + m * stride + j;
            for b in 0..n_batch {
                let blk = j * n_batch + b;
                let xb = &mut cur[blk * n..(blk + 1) * n];
                if m > 0 {
                    let prev = &done[(m - 1) * row + blk * n..(m - 1) * row + (blk + 1) * n];
                    let base = ((m * stride + j) * n_batch + b) * n * n;
                    sub_matvec(xb, &cpl[base..base + n * n], prev, n);
                }
                fact.solve_in_place(k, b, xb);
            }
        }
    }
}
