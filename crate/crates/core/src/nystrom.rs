//! Shift-stabilized Nystrom approximation `A ~ U diag(lambda) U^T` of a PSD operator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TraceError};
use crate::linop::SymmetricOperator;

#[derive(Debug, Clone)]
pub struct NystromFactors {
    /// `n x k`, orthonormal columns.
    pub u: DMatrix<f64>,
    /// Non-negative, in decreasing order.
    pub lambda: DVector<f64>,
    pub shift_nu: f64,
    pub probe_count: usize,
}

impl NystromFactors {
    pub fn trace(&self) -> f64 {
        self.lambda.sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let scaled = &self.u * DMatrix::from_diagonal(&self.lambda);
        scaled * self.u.transpose()
    }

    /// `U diag(lambda) U^T x`.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut coeffs = self.u.tr_mul(x);
        for (mut row, &l) in coeffs.row_iter_mut().zip(self.lambda.iter()) {
            row *= l;
        }
        &self.u * coeffs
    }

    /// `|diag(lambda)^{1/2} U^T x|_F^2`, the quadratic form of the approximation summed over
    /// the columns of `x`.
    pub fn quadratic_form(&self, x: &DMatrix<f64>) -> f64 {
        let coeffs = self.u.tr_mul(x);
        coeffs
            .row_iter()
            .zip(self.lambda.iter())
            .map(|(row, &l)| l * row.norm_squared())
            .sum()
    }
}

/// Distance from `x` to the next larger double.
fn spacing(x: f64) -> f64 {
    x.next_up() - x
}

/// Lower Cholesky factor of a symmetric matrix, reporting the first non-positive pivot.
fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = m.nrows();
    let mut l = DMatrix::zeros(k, k);
    for j in 0..k {
        let mut d = m[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        if !(d > 0.0) {
            return Err(TraceError::NotPsd { pivot: j, value: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..k {
            let mut s = m[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Factors from probes `omega` and the sketch `y = A omega`, without touching `A`.
pub fn nystrom_factor_from_sketch(omega: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<NystromFactors> {
    let (n, k) = omega.shape();
    if y.shape() != (n, k) {
        return Err(TraceError::Dimension {
            expected: k,
            found: y.ncols(),
        });
    }
    if k == 0 || k > n {
        return Err(TraceError::param(format!(
            "Nystrom approximation needs between 1 and n = {n} probes, got {k}"
        )));
    }
    let y_norm = y.singular_values().max();
    let nu = (n as f64).sqrt() * spacing(y_norm);
    let y_nu = y + omega * nu;
    let core = omega.tr_mul(&y_nu);
    let core = (&core + core.transpose()) * 0.5;
    let l = cholesky_lower(&core)?;
    // B = Y_nu L^-T, computed as (L^-1 Y_nu^T)^T
    let bt = l
        .solve_lower_triangular(&y_nu.transpose())
        .ok_or_else(|| TraceError::Domain("singular Cholesky factor in Nystrom approximation".into()))?;
    let svd = bt.transpose().svd(true, false);
    let u_full = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut u = DMatrix::zeros(n, k);
    let mut lambda = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        u.set_column(dst, &u_full.column(src));
        let s = svd.singular_values[src];
        lambda[dst] = (s * s - nu).max(0.0);
    }
    Ok(NystromFactors {
        u,
        lambda,
        shift_nu: nu,
        probe_count: k,
    })
}

/// Computes `Y = A omega` (`k` matvecs) and the stabilized factors.
pub fn nystrom_factor<O: SymmetricOperator + ?Sized>(op: &O, omega: &DMatrix<f64>) -> Result<NystromFactors> {
    let y = op.apply(omega)?;
    nystrom_factor_from_sketch(omega, &y)
}

/// `|A - U diag(lambda) U^T|_F` by densifying `A` (n matvecs).
pub fn nystrom_error_check<O: SymmetricOperator + ?Sized>(op: &O, factors: &NystromFactors) -> Result<f64> {
    if factors.u.nrows() != op.dim() {
        return Err(TraceError::Dimension {
            expected: op.dim(),
            found: factors.u.nrows(),
        });
    }
    let a = crate::linop::densify(op)?;
    Ok((a - factors.to_dense()).norm())
}
