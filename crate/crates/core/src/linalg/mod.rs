//! Batched, blocked, lower-bidiagonal linear systems.
//!
//! A [`BlockBidiagonalSystem`] holds, for each of `n_batch` independent
//! problems, the operator
//!
//! ```text
//! | A_1                    |
//! | B_1  A_2               |
//! |      B_2  A_3          |
//! |           ...  ...     |
//! |              B_{n-1} A_n |
//! ```
//!
//! with `n_size × n_size` blocks. The diagonal blocks are LU-factored once
//! ([`factor_diagonal_blocks`]) and the factors are reused by every solver.
//! Explicit inverses are never formed.

mod dense;
mod factor;
mod pcr;
mod thomas;

use ndarray::{s, Array2, Array3, Array4, ArrayView3, ArrayView4, Axis};

use crate::error::{Error, Result};

pub use dense::{solve_dense_oracle, DENSE_ORACLE_LIMIT};
pub use factor::{factor_diagonal_blocks, DiagonalFactorization, PIVOT_RTOL};
pub use pcr::{power_of_two_partitions, solve_hybrid, solve_pcr, solve_pcr_with_stats, PcrStats};
pub use thomas::solve_thomas;

/// Diagonal blocks `A_k` with shape `(n_chunk, n_batch, n_size, n_size)` and
/// sub-diagonal blocks `B_k` with shape `(n_chunk - 1, n_batch, n_size, n_size)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockBidiagonalSystem {
    diag: Array4<f64>,
    offdiag: Array4<f64>,
}

impl BlockBidiagonalSystem {
    pub fn new(diag: Array4<f64>, offdiag: Array4<f64>) -> Result<Self> {
        let (n_chunk, n_batch, n_size, n_size2) = diag.dim();
        if n_chunk == 0 || n_batch == 0 || n_size == 0 {
            return Err(Error::ShapeMismatch(format!(
                "block system dimensions must be positive, got {:?}",
                diag.dim()
            )));
        }
        if n_size != n_size2 {
            return Err(Error::ShapeMismatch(format!(
                "diagonal blocks must be square, got {n_size}x{n_size2}"
            )));
        }
        if offdiag.dim() != (n_chunk - 1, n_batch, n_size, n_size) {
            return Err(Error::ShapeMismatch(format!(
                "off-diagonal blocks have shape {:?}, expected {:?}",
                offdiag.dim(),
                (n_chunk - 1, n_batch, n_size, n_size)
            )));
        }
        Ok(Self {
            diag: standard(diag),
            offdiag: standard(offdiag),
        })
    }

    /// Identity diagonal and `offdiag_value · I` sub-diagonal.
    pub fn identity(
        n_chunk: usize,
        n_batch: usize,
        n_size: usize,
        offdiag_value: f64,
    ) -> Result<Self> {
        let eye = Array2::<f64>::eye(n_size);
        let mut diag = Array4::zeros((n_chunk, n_batch, n_size, n_size));
        let mut offdiag = Array4::zeros((n_chunk.saturating_sub(1), n_batch, n_size, n_size));
        for k in 0..n_chunk {
            for b in 0..n_batch {
                diag.slice_mut(s![k, b, .., ..]).assign(&eye);
                if k + 1 < n_chunk {
                    offdiag
                        .slice_mut(s![k, b, .., ..])
                        .assign(&(&eye * offdiag_value));
                }
            }
        }
        Self::new(diag, offdiag)
    }

    pub fn n_chunk(&self) -> usize {
        self.diag.len_of(Axis(0))
    }

    pub fn n_batch(&self) -> usize {
        self.diag.len_of(Axis(1))
    }

    pub fn n_size(&self) -> usize {
        self.diag.len_of(Axis(2))
    }

    pub fn diag(&self) -> ArrayView4<'_, f64> {
        self.diag.view()
    }

    pub fn offdiag(&self) -> ArrayView4<'_, f64> {
        self.offdiag.view()
    }

    pub fn into_parts(self) -> (Array4<f64>, Array4<f64>) {
        (self.diag, self.offdiag)
    }

    /// Computes `M x` block by block.
    pub fn matvec(&self, x: &BatchedChunkVector) -> Result<BatchedChunkVector> {
        self.check_rhs(x)?;
        let (n_chunk, n_batch, n) = x.dim();
        let mut out = Array3::zeros((n_chunk, n_batch, n));
        for k in 0..n_chunk {
            for b in 0..n_batch {
                let xk = x.data.slice(s![k, b, ..]);
                let mut acc = self.diag.slice(s![k, b, .., ..]).dot(&xk);
                if k > 0 {
                    let xprev = x.data.slice(s![k - 1, b, ..]);
                    acc += &self.offdiag.slice(s![k - 1, b, .., ..]).dot(&xprev);
                }
                out.slice_mut(s![k, b, ..]).assign(&acc);
            }
        }
        Ok(BatchedChunkVector::from(out))
    }

    /// Assembles the full `(n_chunk·n_size)²` matrix for one batch entry.
    pub fn assemble_dense(&self, batch: usize) -> Array2<f64> {
        let (n_chunk, n) = (self.n_chunk(), self.n_size());
        let mut dense = Array2::zeros((n_chunk * n, n_chunk * n));
        for k in 0..n_chunk {
            dense
                .slice_mut(s![k * n..(k + 1) * n, k * n..(k + 1) * n])
                .assign(&self.diag.slice(s![k, batch, .., ..]));
            if k > 0 {
                dense
                    .slice_mut(s![k * n..(k + 1) * n, (k - 1) * n..k * n])
                    .assign(&self.offdiag.slice(s![k - 1, batch, .., ..]));
            }
        }
        dense
    }

    pub(crate) fn check_rhs(&self, rhs: &BatchedChunkVector) -> Result<()> {
        let expected = (self.n_chunk(), self.n_batch(), self.n_size());
        if rhs.dim() != expected {
            return Err(Error::ShapeMismatch(format!(
                "right-hand side has shape {:?}, system expects {:?}",
                rhs.dim(),
                expected
            )));
        }
        Ok(())
    }
}

/// A `(n_chunk, n_batch, n_size)` array of per-step vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchedChunkVector {
    data: Array3<f64>,
}

impl BatchedChunkVector {
    pub fn new(data: Array3<f64>) -> Self {
        Self {
            data: data.as_standard_layout().into_owned(),
        }
    }

    pub fn zeros(n_chunk: usize, n_batch: usize, n_size: usize) -> Self {
        Self {
            data: Array3::zeros((n_chunk, n_batch, n_size)),
        }
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn view(&self) -> ArrayView3<'_, f64> {
        self.data.view()
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<f64> {
        &mut self.data
    }

    pub fn into_inner(self) -> Array3<f64> {
        self.data
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl From<Array3<f64>> for BatchedChunkVector {
    fn from(data: Array3<f64>) -> Self {
        Self::new(data)
    }
}

fn standard(a: Array4<f64>) -> Array4<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// Which block-bidiagonal algorithm to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearSolver {
    #[default]
    Thomas,
    Pcr,
    /// `n_switch` reduction sweeps, then Thomas on the remaining subsystems.
    Hybrid {
        n_switch: usize,
    },
}

impl LinearSolver {
    pub fn solve(
        &self,
        system: &BlockBidiagonalSystem,
        rhs: &BatchedChunkVector,
    ) -> Result<BatchedChunkVector> {
        match *self {
            LinearSolver::Thomas => solve_thomas(system, rhs),
            LinearSolver::Pcr => solve_pcr(system, rhs),
            LinearSolver::Hybrid { n_switch } => solve_hybrid(system, rhs, n_switch),
        }
    }
}

// Small dense kernels on row-major slices.

/// `out -= m · v` for an `n × n` block.
#[inline]
pub(crate) fn sub_matvec(out: &mut [f64], m: &[f64], v: &[f64], n: usize) {
    for (i, o) in out.iter_mut().enumerate().take(n) {
        let row = &m[i * n..(i + 1) * n];
        let mut acc = 0.0;
        for j in 0..n {
            acc += row[j] * v[j];
        }
        *o -= acc;
    }
}


#[cfg(test)]
mod tests {
    use ndarray::{Array1, Array3, Array4};

    use super::testing::random_system;
    use super::*;

    #[test]
    fn rejects_bad_offdiag_shape() {
        let diag = Array4::zeros((3, 1, 2, 2));
        let offdiag = Array4::zeros((3, 1, 2, 2));
        assert!(matches!(
            BlockBidiagonalSystem::new(diag, offdiag),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn rejects_empty_dimensions() {
        let diag = Array4::zeros((0, 1, 2, 2));
        let offdiag = Array4::zeros((0, 1, 2, 2));
        assert!(BlockBidiagonalSystem::new(diag, offdiag).is_err());
    }

    #[test]
    fn matvec_agrees_with_dense_assembly() {
        let (system, x) = random_system(5, 2, 3, 11);
        let y = system.matvec(&x).unwrap();
        for b in 0..2 {
            let dense = system.assemble_dense(b);
            let xb: &Array3<f64> = x.data();
            let flat: Vec<f64> = (0..5)
                .flat_map(|k| (0..3).map(move |i| (k, i)))
                .map(|(k, i)| xb[[k, b, i]])
                .collect();
            let yb = dense.dot(&Array1::from(flat));
            for k in 0..5 {
                for i in 0..3 {
                    assert!((yb[k * 3 + i] - y.data()[[k, b, i]]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn identity_constructor() {
        let sys = BlockBidiagonalSystem::identity(3, 2, 2, -1.0).unwrap();
        assert_eq!(sys.diag()[[1, 1, 0, 0]], 1.0);
        assert_eq!(sys.diag()[[1, 1, 0, 1]], 0.0);
        assert_eq!(sys.offdiag()[[0, 0, 1, 1]], -1.0);
        let dense = sys.assemble_dense(0);
        assert_eq!(dense.dim(), (6, 6));
        assert_eq!(dense[[2, 0]], -1.0);
    }
}
