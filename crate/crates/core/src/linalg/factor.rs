use ndarray::{Array3, Array4, Axis};

use super::{BatchedChunkVector, BlockBidiagonalSystem};
use crate::error::{Error, Result};

/// A block is singular when its largest pivot falls below this fraction of
/// the block's max-norm.
pub const PIVOT_RTOL: f64 = 1e-14;

/// LU factors (partial pivoting) of every diagonal block of a system.
///
/// `lu[k, b]` holds the packed unit-lower / upper factors of `A_k` for batch
/// entry `b`, `pivots[k, b, i]` the row swapped into position `i`.
#[derive(Debug, Clone)]
pub struct DiagonalFactorization {
    lu: Array4<f64>,
    pivots: Array3<usize>,
}

/// Factors all `n_chunk × n_batch` diagonal blocks independently.
pub fn factor_diagonal_blocks(system: &BlockBidiagonalSystem) -> Result<DiagonalFactorization> {
    let (n_chunk, n_batch, n) = (system.n_chunk(), system.n_batch(), system.n_size());
    let mut lu = system.diag().to_owned();
    let mut pivots = Array3::zeros((n_chunk, n_batch, n));
    let lu_flat = lu.as_slice_mut().expect("standard layout");
    let piv_flat = pivots.as_slice_mut().expect("standard layout");
    for (idx, (block, piv)) in lu_flat
        .chunks_exact_mut(n * n)
        .zip(piv_flat.chunks_exact_mut(n))
        .enumerate()
    {
        if !lu_in_place(block, n, piv) {
            return Err(Error::SingularBlock {
                chunk: idx / n_batch,
                batch: idx % n_batch,
            });
        }
    }
    Ok(DiagonalFactorization { lu, pivots })
}

impl DiagonalFactorization {
    pub fn n_chunk(&self) -> usize {
        self.lu.len_of(Axis(0))
    }

    pub fn n_batch(&self) -> usize {
        self.lu.len_of(Axis(1))
    }

    pub fn n_size(&self) -> usize {
        self.lu.len_of(Axis(2))
    }

    /// Overwrites `rhs` with `A_{chunk,batch}⁻¹ rhs`.
    #[inline]
    pub fn solve_in_place(&self, chunk: usize, batch: usize, rhs: &mut [f64]) {
        let n = self.n_size();
        let idx = chunk * self.n_batch() + batch;
        let lu = &self.lu.as_slice().expect("standard layout")[idx * n * n..(idx + 1) * n * n];
        let piv = &self.pivots.as_slice().expect("standard layout")[idx * n..(idx + 1) * n];
        lu_solve(lu, piv, n, rhs, 1);
    }

    /// Overwrites the row-major `n_size × ncols` matrix `rhs` with `A⁻¹ rhs`.
    #[inline]
    pub fn solve_matrix_in_place(&self, chunk: usize, batch: usize, rhs: &mut [f64], ncols: usize) {
        let n = self.n_size();
        let idx = chunk * self.n_batch() + batch;
        let lu = &self.lu.as_slice().expect("standard layout")[idx * n * n..(idx + 1) * n * n];
        let piv = &self.pivots.as_slice().expect("standard layout")[idx * n..(idx + 1) * n];
        lu_solve(lu, piv, n, rhs, ncols);
    }

    /// Applies `A_k⁻¹` to every block row of `rhs` (block-diagonal solve).
    pub fn solve(&self, rhs: &BatchedChunkVector) -> Result<BatchedChunkVector> {
        let expected = (self.n_chunk(), self.n_batch(), self.n_size());
        if rhs.dim() != expected {
            return Err(Error::ShapeMismatch(format!(
                "right-hand side has shape {:?}, factorization expects {:?}",
                rhs.dim(),
                expected
            )));
        }
        let mut out = rhs.clone();
        let n = self.n_size();
        let n_batch = self.n_batch();
        let flat = out.data_mut().as_slice_mut().expect("standard layout");
        for (idx, row) in flat.chunks_exact_mut(n).enumerate() {
            self.solve_in_place(idx / n_batch, idx % n_batch, row);
        }
        Ok(out)
    }
}

/// Row-major LU with partial pivoting. Returns `false` when a pivot falls
/// below `PIVOT_RTOL · max|a|` (or the block is zero / non-finite).
fn lu_in_place(a: &mut [f64], n: usize, piv: &mut [usize]) -> bool {
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(scale > 0.0 && scale.is_finite()) {
        return false;
    }
    let tol = PIVOT_RTOL * scale;
    for k in 0..n {
        let mut p = k;
        let mut pmax = a[k * n + k].abs();
        for i in k + 1..n {
            let v = a[i * n + k].abs();
            if v > pmax {
                pmax = v;
                p = i;
            }
        }
        if pmax.is_nan() || pmax < tol || pmax == 0.0 {
            return false;
        }
        piv[k] = p;
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
        }
        let inv = 1.0 / a[k * n + k];
        for i in k + 1..n {
            let f = a[i * n + k] * inv;
            a[i * n + k] = f;
            if f != 0.0 {
                for j in k + 1..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
            }
        }
    }
    true
}

fn lu_solve(lu: &[f64], piv: &[usize], n: usize, b: &mut [f64], ncols: usize) {
    for (k, &p) in piv.iter().enumerate().take(n) {
        if p != k {
            for c in 0..ncols {
                b.swap(k * ncols + c, p * ncols + c);
            }
        }
    }
    // L y = P b
    for i in 1..n {
        for j in 0..i {
            let l = lu[i * n + j];
            if l != 0.0 {
                for c in 0..ncols {
                    b[i * ncols + c] -= l * b[j * ncols + c];
                }
            }
        }
    }
    // U x = y
    for i in (0..n).rev() {
        for j in i + 1..n {
            let u = lu[i * n + j];
            for c in 0..ncols {
                b[i * ncols + c] -= u * b[j * ncols + c];
            }
        }
        let d = lu[i * n + i];
        for c in 0..ncols {
            b[i * ncols + c] /= d;
        }
    }
}

#[cfg(test)]
mod tests {
    use ndarray::{s, Array3, Array4};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn single_block_system(diag: Array4<f64>) -> BlockBidiagonalSystem {
        let (c, b, n, _) = diag.dim();
        BlockBidiagonalSystem::new(diag, Array4::zeros((c - 1, b, n, n))).unwrap()
    }

    #[test]
    fn identity_blocks_return_rhs() {
        let sys = BlockBidiagonalSystem::identity(3, 2, 4, 0.0).unwrap();
        let fact = factor_diagonal_blocks(&sys).unwrap();
        let rhs = BatchedChunkVector::from(Array3::from_shape_fn((3, 2, 4), |(k, b, i)| {
            (k * 8 + b * 4 + i) as f64
        }));
        assert_eq!(fact.solve(&rhs).unwrap(), rhs);
    }

    #[test]
    fn scalar_division() {
        let sys = single_block_system(Array4::from_elem((1, 1, 1, 1), 2.0));
        let fact = factor_diagonal_blocks(&sys).unwrap();
        let x = fact
            .solve(&BatchedChunkVector::from(Array3::from_elem((1, 1, 1), 3.0)))
            .unwrap();
        assert_eq!(x.data()[[0, 0, 0]], 1.5);
    }

    #[test]
    fn multiply_then_solve_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (c, b, n) = (4, 3, 3);
        let diag = Array4::from_shape_fn((c, b, n, n), |_| rng.gen_range(-1.0..1.0));
        let v = Array3::from_shape_fn((c, b, n), |_| rng.gen_range(-1.0..1.0));
        let mut av = Array3::zeros((c, b, n));
        for k in 0..c {
            for j in 0..b {
                let prod = diag.slice(s![k, j, .., ..]).dot(&v.slice(s![k, j, ..]));
                av.slice_mut(s![k, j, ..]).assign(&prod);
            }
        }
        let sys = single_block_system(diag);
        let fact = factor_diagonal_blocks(&sys).unwrap();
        let back = fact.solve(&BatchedChunkVector::from(av)).unwrap();
        let err = (back.data() - &v)
            .iter()
            .fold(0.0_f64, |m, x| m.max(x.abs()));
        let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        assert!(err <= 1e-12 * scale, "round-trip error {err}");
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let mut diag = Array4::zeros((1, 1, 2, 2));
        diag[[0, 0, 0, 1]] = 1.0;
        diag[[0, 0, 1, 0]] = 1.0;
        let fact = factor_diagonal_blocks(&single_block_system(diag)).unwrap();
        let mut rhs = [2.0, 5.0];
        fact.solve_in_place(0, 0, &mut rhs);
        assert_eq!(rhs, [5.0, 2.0]);
    }

    #[test]
    fn reports_singular_block_location() {
        let mut diag = Array4::zeros((3, 2, 2, 2));
        for k in 0..3 {
            for b in 0..2 {
                diag[[k, b, 0, 0]] = 1.0;
                diag[[k, b, 1, 1]] = 1.0;
            }
        }
        // rank one block at chunk 2, batch 1
        diag[[2, 1, 1, 1]] = 0.0;
        diag[[2, 1, 1, 0]] = 1.0;
        diag[[2, 1, 0, 0]] = 1.0;
        let err = factor_diagonal_blocks(&single_block_system(diag)).unwrap_err();
        assert_eq!(err, Error::SingularBlock { chunk: 2, batch: 1 });
    }

    #[test]
    fn near_singular_relative_to_scale() {
        let mut diag = Array4::zeros((1, 1, 2, 2));
        diag[[0, 0, 0, 0]] = 1e20;
        diag[[0, 0, 1, 1]] = 1e5; // 1e-15 relative
        assert!(factor_diagonal_blocks(&single_block_system(diag.clone())).is_err());
        diag[[0, 0, 1, 1]] = 1e7;
        assert!(factor_diagonal_blocks(&single_block_system(diag)).is_ok());
    }

    #[test]
    fn zero_block_is_singular() {
        let diag = Array4::zeros((1, 1, 3, 3));
        assert!(factor_diagonal_blocks(&single_block_system(diag)).is_err());
    }

    #[test]
    fn matrix_solve_matches_column_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 4;
        let mut diag = Array4::from_shape_fn((1, 1, n, n), |_| rng.gen_range(-1.0..1.0));
        for i in 0..n {
            diag[[0, 0, i, i]] += 3.0;
        }
        let fact = factor_diagonal_blocks(&single_block_system(diag)).unwrap();
        let m: Vec<f64> = (0..n * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut both = m.clone();
        fact.solve_matrix_in_place(0, 0, &mut both, 2);
        for c in 0..2 {
            let mut col: Vec<f64> = (0..n).map(|i| m[i * 2 + c]).collect();
            fact.solve_in_place(0, 0, &mut col);
            for i in 0..n {
                assert!((col[i] - both[i * 2 + c]).abs() < 1e-15);
            }
        }
    }
}
