use nalgebra::{DMatrix, DVector};

use super::{MatvecCounter, SymmetricOperator};
use crate::error::{Result, TraceError};

/// `B^degree`. One matvec with this operator costs `degree` matvecs with `B`.
#[derive(Debug)]
pub struct PolynomialOperator<B> {
    base: B,
    degree: usize,
    counter: MatvecCounter,
}

impl<B: SymmetricOperator> PolynomialOperator<B> {
    pub fn new(base: B, degree: usize) -> Result<Self> {
        if degree < 1 {
            return Err(TraceError::param("polynomial degree must be at least 1"));
        }
        Ok(Self {
            base,
            degree,
            counter: MatvecCounter::new(),
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn base(&self) -> &B {
        &self.base
    }
}

impl<B: SymmetricOperator> SymmetricOperator for PolynomialOperator<B> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }

    fn apply_uncounted(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut y = self.base.apply(x)?;
        for _ in 1..self.degree {
            y = self.base.apply(&y)?;
        }
        Ok(y)
    }

    fn base_matvecs(&self) -> u64 {
        self.base.base_matvecs()
    }
}

/// `shift * I + F diag(weights) F^T`.
#[derive(Debug)]
pub struct LowRankUpdateOperator {
    shift: f64,
    factors: DMatrix<f64>,
    weights: DVector<f64>,
    counter: MatvecCounter,
}

impl LowRankUpdateOperator {
    pub fn new(shift: f64, factors: DMatrix<f64>, weights: DVector<f64>) -> Result<Self> {
        if factors.ncols() != weights.len() {
            return Err(TraceError::Dimension {
                expected: factors.ncols(),
                found: weights.len(),
            });
        }
        Ok(Self {
            shift,
            factors,
            weights,
            counter: MatvecCounter::new(),
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.factors.nrows();
        let scaled = &self.factors * DMatrix::from_diagonal(&self.weights);
        DMatrix::identity(n, n) * self.shift + scaled * self.factors.transpose()
    }
}

impl SymmetricOperator for LowRankUpdateOperator {
    fn dim(&self) -> usize {
        self.factors.nrows()
    }

    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }

    fn apply_uncounted(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = x * self.shift;
        let mut coeffs = DVector::zeros(self.weights.len());
        for j in 0..x.ncols() {
            coeffs.gemv_tr(1.0, &self.factors, &x.column(j), 0.0);
            coeffs.component_mul_assign(&self.weights);
            out.column_mut(j).gemv(1.0, &self.factors, &coeffs, 1.0);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::{densify, symmetry_defect, DenseOperator};

    #[test]
    fn scalar_cube() {
        let base = DenseOperator::new(DMatrix::from_element(1, 1, 2.0)).unwrap();
        let op = PolynomialOperator::new(&base, 3).unwrap();
        let y = op.apply(&DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert_eq!(y[(0, 0)], 8.0);
        assert_eq!(op.matvecs(), 1);
        assert_eq!(op.base_matvecs(), 3);
    }

    #[test]
    fn triangle_graph_cube_trace() {
        let k3 = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        let base = DenseOperator::new(k3).unwrap();
        let op = PolynomialOperator::new(&base, 3).unwrap();
        assert_eq!(densify(&op).unwrap().trace(), 6.0);
    }

    #[test]
    fn path_graph_is_triangle_free() {
        let p3 = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let base = DenseOperator::new(p3).unwrap();
        let op = PolynomialOperator::new(&base, 3).unwrap();
        assert_eq!(densify(&op).unwrap().trace(), 0.0);
    }

    #[test]
    fn zero_degree_rejected() {
        let base = DenseOperator::new(DMatrix::identity(2, 2)).unwrap();
        assert!(PolynomialOperator::new(&base, 0).is_err());
    }

    #[test]
    fn base_accounting_is_degree_times_applications() {
        let base = DenseOperator::new(DMatrix::identity(5, 5)).unwrap();
        let op = PolynomialOperator::new(&base, 4).unwrap();
        for cols in [1, 3, 2] {
            op.apply(&DMatrix::zeros(5, cols)).unwrap();
        }
        assert_eq!(op.matvecs(), 6);
        assert_eq!(op.base_matvecs(), 24);
    }

    #[test]
    fn low_rank_update_matches_dense() {
        let f = DMatrix::from_fn(6, 2, |i, j| (i as f64 + 1.0) * (j as f64 - 0.5));
        let op = LowRankUpdateOperator::new(1.0, f, DVector::from_vec(vec![2.0, 0.5])).unwrap();
        let dense = op.to_dense();
        assert!((densify(&op).unwrap() - dense).amax() < 1e-12);
        assert!(symmetry_defect(&op, 20, 2).unwrap() < 1e-10);
    }
}
