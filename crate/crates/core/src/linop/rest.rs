use nalgebra::{DMatrix, DVector};

use super::{MatvecCounter, SymmetricOperator};
use crate::error::{Result, TraceError};

/// Orthonormality tolerance accepted for deflation bases.
pub const BASIS_TOL: f64 = 1e-10;

/// The doubly deflated operator `(I - QQ^T) A (I - QQ^T)`, never formed explicitly.
#[derive(Debug)]
pub struct RestOperator<B> {
    base: B,
    basis: DMatrix<f64>,
    counter: MatvecCounter,
}

impl<B: SymmetricOperator> RestOperator<B> {
    pub fn new(base: B, basis: DMatrix<f64>) -> Result<Self> {
        if basis.nrows() != base.dim() {
            return Err(TraceError::Dimension {
                expected: base.dim(),
                found: basis.nrows(),
            });
        }
        let r = basis.ncols();
        if r > 0 {
            let defect = (basis.tr_mul(&basis) - DMatrix::<f64>::identity(r, r)).amax();
            if defect > BASIS_TOL {
                return Err(TraceError::param(format!(
                    "deflation basis is not orthonormal (|Q^T Q - I|_max = {defect:e})"
                )));
            }
        }
        Ok(Self {
            base,
            basis,
            counter: MatvecCounter::new(),
        })
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn base(&self) -> &B {
        &self.base
    }

    /// `(I - QQ^T) x` applied column by column.
    pub fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        project_out(&self.basis, x)
    }
}

pub(crate) fn project_out(basis: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    if basis.ncols() == 0 {
        return out;
    }
    let mut coeffs = DVector::zeros(basis.ncols());
    for j in 0..x.ncols() {
        coeffs.gemv_tr(1.0, basis, &x.column(j), 0.0);
        out.column_mut(j).gemv(-1.0, basis, &coeffs, 1.0);
    }
    out
}

impl<B: SymmetricOperator> SymmetricOperator for RestOperator<B> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }

    fn apply_uncounted(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let deflated = self.project(x);
        let y = self.base.apply(&deflated)?;
        Ok(self.project(&y))
    }

    fn base_matvecs(&self) -> u64 {
        self.base.base_matvecs()
    }
}
