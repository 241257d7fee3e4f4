//! Dense Cholesky factorization with diagonal jitter escalation.
//!
//! Matrices cross the public API as `nalgebra` types; the factorization and
//! triangular solves run on `faer`, sequentially, so results are
//! bit-reproducible for a given input.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{cholesky_in_place, cholesky_in_place_scratch};
use faer::linalg::triangular_inverse::invert_lower_triangular;
use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::{Mat, MatMut, MatRef, Par};
use nalgebra::{DMatrix, DVector};

use crate::error::{CalibError, Result};

/// Relative jitter levels tried in order; each is multiplied by the mean of
/// the diagonal before being added to it.
pub const JITTER_LEVELS: [f64; 3] = [1e-10, 1e-8, 1e-6];

fn as_ref(m: &DMatrix<f64>) -> MatRef<'_, f64> {
    MatRef::from_column_major_slice(m.as_slice(), m.nrows(), m.ncols())
}

fn as_mut(m: &mut DMatrix<f64>) -> MatMut<'_, f64> {
    let (r, c) = m.shape();
    MatMut::from_column_major_slice_mut(m.as_mut_slice(), r, c)
}

/// Lower Cholesky factor `L` with `L Lᵀ = A + jitter·I`.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    l: Mat<f64>,
    jitter: f64,
}

impl JitteredCholesky {
    /// Factor a symmetric matrix, escalating the jitter over [`JITTER_LEVELS`].
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        Self::factor_with_levels(a, &JITTER_LEVELS)
    }

    pub fn factor_with_levels(a: &DMatrix<f64>, levels: &[f64]) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(CalibError::dims("cholesky (square)", n, a.ncols()));
        }
        let mean_diag = if n == 0 { 0.0 } else { a.diagonal().sum() / n as f64 };
        let mut attempted = Vec::with_capacity(levels.len());
        let mut mem = MemBuffer::new(cholesky_in_place_scratch::<f64>(n, Par::Seq, Default::default()));
        for &level in levels {
            attempted.push(level);
            let jitter = level * mean_diag;
            if !jitter.is_finite() || a.iter().any(|v| !v.is_finite()) {
                break;
            }
            let mut l = Mat::<f64>::zeros(n, n);
            let src = as_ref(a);
            for j in 0..n {
                for i in j..n {
                    l[(i, j)] = src[(i, j)];
                }
                l[(j, j)] += jitter;
            }
            let stack = MemStack::new(&mut mem);
            if cholesky_in_place(l.as_mut(), Default::default(), Par::Seq, stack, Default::default()).is_ok() {
                return Ok(Self { l, jitter });
            }
        }
        Err(CalibError::NotPositiveDefinite { attempted })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Absolute jitter that was added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }

    /// Copy of the lower factor.
    pub fn lower(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| self.l[(i, j)])
    }

    /// Solve `L X = B` in place.
    pub fn solve_lower_in_place(&self, b: &mut DMatrix<f64>) {
        assert_eq!(b.nrows(), self.dim());
        solve_lower_triangular_in_place(self.l.as_ref(), as_mut(b), Par::Seq);
    }

    /// Solve `Lᵀ X = B` in place.
    pub fn solve_upper_in_place(&self, b: &mut DMatrix<f64>) {
        assert_eq!(b.nrows(), self.dim());
        solve_upper_triangular_in_place(self.l.as_ref().transpose(), as_mut(b), Par::Seq);
    }

    pub fn solve_lower_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut m = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
        self.solve_lower_in_place(&mut m);
        DVector::from_column_slice(m.as_slice())
    }

    /// Solve `(L Lᵀ) X = B`.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
        DVector::from_column_slice(self.solve_mat(&m).as_slice())
    }

    /// Inverse of the trailing diagonal block `L[start.., start..]`.
    ///
    /// When the factored matrix is ordered `[a; b]`, the trailing block is the
    /// Cholesky factor of the Schur complement of `a`, so its inverse gives
    /// access to the `b`-block of the precision matrix.
    pub fn trailing_lower_inverse(&self, start: usize) -> DMatrix<f64> {
        let m = self.dim() - start;
        let block = self.l.as_ref().submatrix(start, start, m, m);
        let mut out = DMatrix::<f64>::zeros(m, m);
        invert_lower_triangular(as_mut(&mut out), block, Par::Seq);
        out
    }

    /// Diagonal entry of the lower factor.
    pub fn lower_diag(&self, i: usize) -> f64 {
        self.l[(i, i)]
    }
}
