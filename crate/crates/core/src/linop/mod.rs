//! Matrix-free symmetric operators.
//!
//! Every estimator in this crate touches its input only through
//! [`SymmetricOperator::apply`], which multiplies the operator with a block of
//! columns and charges one matvec per column to the operator's counter.
//!
//! Implementations must be column separable: column `j` of the output depends
//! only on column `j` of the input and is computed by the same floating-point
//! sequence regardless of how many other columns travel alongside it. The
//! estimators rely on this to make results independent of block size.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TraceError};
use crate::sketch::{ProbeKind, ProbeStream};

mod compose;
mod inverse;
mod rest;
mod sparse;
mod spectral;

pub use compose::{LowRankUpdateOperator, PolynomialOperator};
pub use inverse::{InverseOperator, SolverKind, TridiagonalBands, DEFAULT_CG_TOL};
pub use rest::RestOperator;
pub use sparse::{poisson_2d, CsrMatrix, SparseOperator};
pub use spectral::SpectralOperator;

/// Monotone matvec counter shared by all operator implementations.
#[derive(Debug, Default)]
pub struct MatvecCounter(AtomicU64);

impl MatvecCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, columns: usize) {
        self.0.fetch_add(columns as u64, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// A symmetric `n x n` operator accessible only through products with blocks of vectors.
pub trait SymmetricOperator: Send + Sync {
    fn dim(&self) -> usize;

    fn counter(&self) -> &MatvecCounter;

    /// Applies the operator without touching the counter. Must be column separable.
    fn apply_uncounted(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>>;

    /// Applies the operator to an `n x s` block and charges `s` matvecs.
    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.dim() {
            return Err(TraceError::Dimension {
                expected: self.dim(),
                found: x.nrows(),
            });
        }
        self.counter().add(x.ncols());
        self.apply_uncounted(x)
    }

    fn apply_vector(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let block = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        let y = self.apply(&block)?;
        Ok(DVector::from_column_slice(y.as_slice()))
    }

    /// Matvecs charged to this operator so far.
    fn matvecs(&self) -> u64 {
        self.counter().get()
    }

    /// Matvecs with the innermost operator this one is built from. Equal to
    /// [`matvecs`](Self::matvecs) for leaf operators.
    fn base_matvecs(&self) -> u64 {
        self.matvecs()
    }
}

impl<T: SymmetricOperator + ?Sized> SymmetricOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn counter(&self) -> &MatvecCounter {
        (**self).counter()
    }
    fn apply_uncounted(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        (**self).apply_uncounted(x)
    }
    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        (**self).apply(x)
    }
    fn base_matvecs(&self) -> u64 {
        (**self).base_matvecs()
    }
}

impl<T: SymmetricOperator + ?Sized> SymmetricOperator for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn counter(&self) -> &MatvecCounter {
        (**self).counter()
    }
    fn apply_uncounted(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        (**self).apply_uncounted(x)
    }
    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        (**self).apply(x)
    }
    fn base_matvecs(&self) -> u64 {
        (**self).base_matvecs()
    }
}

impl<T: SymmetricOperator + ?Sized> SymmetricOperator for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn counter(&self) -> &MatvecCounter {
        (**self).counter()
    }
    fn apply_uncounted(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        (**self).apply_uncounted(x)
    }
    fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        (**self).apply(x)
    }
    fn base_matvecs(&self) -> u64 {
        (**self).base_matvecs()
    }
}

/// Multiplies `matrix` with every column of `x` through an independent gemv.
pub(crate) fn gemv_columns(matrix: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(matrix.nrows(), x.ncols());
    for j in 0..x.ncols() {
        out.column_mut(j).gemv(1.0, matrix, &x.column(j), 0.0);
    }
    out
}

/// Explicitly stored symmetric matrix.
#[derive(Debug)]
pub struct DenseOperator {
    matrix: DMatrix<f64>,
    counter: MatvecCounter,
}

impl DenseOperator {
    /// Wraps `matrix`, replacing it by `(M + M^T) / 2` when it is not symmetric to 1e-12.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(TraceError::Dimension {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let asym = (&matrix - matrix.transpose()).amax();
        let matrix = if asym > 1e-12 {
            (&matrix + matrix.transpose()) * 0.5
        } else {
            matrix
        };
        Ok(Self {
            matrix,
            counter: MatvecCounter::new(),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

impl SymmetricOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }

    fn apply_uncounted(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(gemv_columns(&self.matrix, x))
    }
}

/// Forms the operator explicitly by applying it to the identity (charges `n` matvecs).
pub fn densify<O: SymmetricOperator + ?Sized>(op: &O) -> Result<DMatrix<f64>> {
    op.apply(&DMatrix::identity(op.dim(), op.dim()))
}

/// Largest relative symmetry defect `|<u, Av> - <v, Au>| / (|Au| |v|)` over
/// `pairs` random unit-vector pairs.
pub fn symmetry_defect<O: SymmetricOperator + ?Sized>(op: &O, pairs: usize, seed: u64) -> Result<f64> {
    let n = op.dim();
    let mut us = ProbeStream::new(seed, n, ProbeKind::Gaussian).with_domain(0xD0);
    let mut vs = ProbeStream::new(seed, n, ProbeKind::Gaussian).with_domain(0xD1);
    let mut u = us.draw_block(pairs);
    let mut v = vs.draw_block(pairs);
    for mut c in u.column_iter_mut() {
        let norm = c.norm();
        c /= norm;
    }
    for mut c in v.column_iter_mut() {
        let norm = c.norm();
        c /= norm;
    }
    let au = op.apply(&u)?;
    let av = op.apply(&v)?;
    let mut worst: f64 = 0.0;
    for j in 0..pairs {
        let lhs = u.column(j).dot(&av.column(j));
        let rhs = v.column(j).dot(&au.column(j));
        let scale = au.column(j).norm() * v.column(j).norm();
        let defect = if scale > 0.0 {
            (lhs - rhs).abs() / scale
        } else {
            (lhs - rhs).abs()
        };
        worst = worst.max(defect);
    }
    Ok(worst)
}
