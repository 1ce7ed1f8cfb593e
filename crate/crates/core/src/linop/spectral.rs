use nalgebra::{DMatrix, DVector};

use super::{MatvecCounter, SymmetricOperator};
use crate::error::{Result, TraceError};
use crate::sketch::{domain, ProbeKind, ProbeStream};

/// `A = U diag(eigenvalues) U^T` with `U` a seeded random orthogonal matrix.
///
/// `U` is the Q factor of a standard Gaussian matrix with the signs of
/// `diag(R)` folded in, so it is Haar distributed and fixed by the seed.
#[derive(Debug)]
pub struct SpectralOperator {
    basis: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    counter: MatvecCounter,
}

impl SpectralOperator {
    pub fn new(eigenvalues: DVector<f64>, seed: u64) -> Result<Self> {
        let n = eigenvalues.len();
        if n == 0 {
            return Err(TraceError::param("spectrum must be non-empty"));
        }
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(TraceError::param("eigenvalues must be finite"));
        }
        let gaussian = ProbeStream::new(seed, n, ProbeKind::Gaussian)
            .with_domain(domain::FIXTURE)
            .draw_block(n);
        Ok(Self::with_basis(random_orthogonal_from(gaussian), eigenvalues))
    }

    /// Uses a caller-supplied orthogonal basis (tests, exact-eigenvector fixtures).
    pub fn with_basis(basis: DMatrix<f64>, eigenvalues: DVector<f64>) -> Self {
        assert_eq!(basis.ncols(), eigenvalues.len());
        Self {
            basis,
            eigenvalues,
            counter: MatvecCounter::new(),
        }
    }

    /// `lambda_i = i^{-c}`, `i = 1..n`.
    pub fn algebraic(n: usize, c: f64, seed: u64) -> Result<Self> {
        Self::new(algebraic_spectrum(n, c), seed)
    }

    /// `lambda_i = exp(-i / s)`, `i = 1..n`.
    pub fn exponential(n: usize, s: f64, seed: u64) -> Result<Self> {
        Self::new(exponential_spectrum(n, s), seed)
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.sum()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.eigenvalues.norm_squared()
    }
}

pub fn algebraic_spectrum(n: usize, c: f64) -> DVector<f64> {
    DVector::from_fn(n, |i, _| ((i + 1) as f64).powf(-c))
}

pub fn exponential_spectrum(n: usize, s: f64) -> DVector<f64> {
    DVector::from_fn(n, |i, _| (-((i + 1) as f64) / s).exp())
}

fn random_orthogonal_from(gaussian: DMatrix<f64>) -> DMatrix<f64> {
    let qr = gaussian.qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

impl SymmetricOperator for SpectralOperator {
    fn dim(&self) -> usize {
        self.basis.nrows()
    }

    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }

    fn apply_uncounted(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let k = self.eigenvalues.len();
        let mut out = DMatrix::zeros(n, x.ncols());
        let mut coeffs = DVector::zeros(k);
        for j in 0..x.ncols() {
            coeffs.gemv_tr(1.0, &self.basis, &x.column(j), 0.0);
            coeffs.component_mul_assign(&self.eigenvalues);
            out.column_mut(j).gemv(1.0, &self.basis, &coeffs, 0.0);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::{densify, symmetry_defect};

    #[test]
    fn identity_spectrum() {
        let op = SpectralOperator::new(DVector::from_element(4, 1.0), 5).unwrap();
        let mut e1 = DMatrix::zeros(4, 1);
        e1[(0, 0)] = 1.0;
        let y = op.apply(&e1).unwrap();
        assert!((y - e1).amax() < 1e-14);
    }

    #[test]
    fn trace_of_inverse_square_spectrum() {
        let spectrum = algebraic_spectrum(1000, 2.0);
        // partial sum of 1/i^2 evaluated back to front
        let oracle: f64 = (1..=1000).rev().map(|i| 1.0 / (i as f64 * i as f64)).sum();
        assert!((spectrum.sum() - oracle).abs() < 1e-13);
        assert!((oracle - 1.643_934_566_681_56).abs() < 1e-12);
    }

    #[test]
    fn densified_eigenvalues_match_spectrum() {
        let eigs = DVector::from_fn(8, |i, _| (i + 1) as f64);
        let op = SpectralOperator::new(eigs, 17).unwrap();
        let dense = densify(&op).unwrap();
        let mut found: Vec<f64> = dense.symmetric_eigenvalues().iter().copied().collect();
        found.sort_by(f64::total_cmp);
        for (i, v) in found.iter().enumerate() {
            assert!((v - (i + 1) as f64).abs() < 1e-10, "{v}");
        }
    }

    #[test]
    fn basis_is_orthogonal_and_seeded() {
        let a = SpectralOperator::algebraic(30, 1.0, 3).unwrap();
        let b = SpectralOperator::algebraic(30, 1.0, 3).unwrap();
        assert_eq!(a.basis(), b.basis());
        let gram = a.basis().transpose() * a.basis();
        assert!((gram - DMatrix::identity(30, 30)).amax() < 1e-12);
        assert!(symmetry_defect(&a, 20, 9).unwrap() < 1e-10);
    }
}
