//! Lanczos approximation of `f(B) x` for symmetric `B`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TraceError};
use crate::linop::{MatvecCounter, SymmetricOperator};

/// Relative size of an off-diagonal below which the Krylov space is treated as invariant.
const BREAKDOWN_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "shift")]
pub enum MatrixFunction {
    Exp,
    Log,
    /// `log(shift I + B)`.
    ShiftedLog(f64),
}

impl MatrixFunction {
    pub fn eval(&self, x: f64) -> Result<f64> {
        match *self {
            MatrixFunction::Exp => Ok(x.exp()),
            MatrixFunction::Log => positive_log(x, x),
            MatrixFunction::ShiftedLog(shift) => positive_log(shift + x, x),
        }
    }
}

fn positive_log(arg: f64, ritz: f64) -> Result<f64> {
    if arg > 0.0 {
        Ok(arg.ln())
    } else {
        Err(TraceError::Domain(format!(
            "logarithm of non-positive value {arg:e} (Ritz value {ritz:e})"
        )))
    }
}

/// `B V = V T + residual e_j^T` with `T = tridiag(beta, alpha, beta)`.
#[derive(Debug, Clone)]
pub struct KrylovDecomposition {
    pub basis: DMatrix<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// `beta_j v_{j+1}`: the part of `B v_j` outside the basis.
    pub residual: DVector<f64>,
    /// Step after which the recurrence broke down (invariant subspace found).
    pub breakdown_at: Option<usize>,
}

impl KrylovDecomposition {
    pub fn tridiagonal(&self) -> DMatrix<f64> {
        let j = self.alpha.len();
        let mut t = DMatrix::from_diagonal(&DVector::from_column_slice(&self.alpha));
        for (i, &b) in self.beta.iter().enumerate() {
            t[(i, i + 1)] = b;
            t[(i + 1, i)] = b;
        }
        debug_assert_eq!(t.nrows(), j);
        t
    }
}

/// Runs `iters` Lanczos steps from `x` with full reorthogonalization.
pub fn lanczos<O: SymmetricOperator + ?Sized>(op: &O, x: &DVector<f64>, iters: usize) -> Result<KrylovDecomposition> {
    if iters < 1 {
        return Err(TraceError::param("Lanczos needs at least one iteration"));
    }
    let n = op.dim();
    if x.len() != n {
        return Err(TraceError::Dimension {
            expected: n,
            found: x.len(),
        });
    }
    let steps = iters.min(n);
    let x_norm = x.norm();
    let mut basis = DMatrix::zeros(n, steps);
    let mut alpha = Vec::with_capacity(steps);
    let mut beta: Vec<f64> = Vec::with_capacity(steps);
    let mut breakdown_at = None;
    let mut residual = DVector::zeros(n);
    if x_norm == 0.0 {
        return Ok(KrylovDecomposition {
            basis: DMatrix::zeros(n, 0),
            alpha,
            beta,
            residual,
            breakdown_at: Some(0),
        });
    }
    basis.set_column(0, &(x / x_norm));
    let mut scale: f64 = 0.0;
    let mut coeffs = DVector::zeros(steps);
    for j in 0..steps {
        let v = basis.column(j).into_owned();
        let mut w = op.apply_vector(&v)?;
        let a = v.dot(&w);
        w.axpy(-a, &v, 1.0);
        if j > 0 {
            w.axpy(-beta[j - 1], &basis.column(j - 1), 1.0);
        }
        let active = basis.columns(0, j + 1);
        for _ in 0..2 {
            let mut c = coeffs.rows_mut(0, j + 1);
            c.gemv_tr(1.0, &active, &w, 0.0);
            w.gemv(-1.0, &active, &c, 1.0);
        }
        alpha.push(a);
        let b = w.norm();
        scale = scale.max(a.abs() + b + beta.last().copied().unwrap_or(0.0));
        if j + 1 == steps {
            residual = w;
            break;
        }
        if b <= BREAKDOWN_TOL * scale {
            breakdown_at = Some(j + 1);
            residual = w;
            break;
        }
        beta.push(b);
        basis.set_column(j + 1, &(w / b));
    }
    let used = alpha.len();
    Ok(KrylovDecomposition {
        basis: basis.columns(0, used).into_owned(),
        alpha,
        beta,
        residual,
        breakdown_at,
    })
}

/// `f(B) x ~ |x| V f(T) e_1` after `iters` Lanczos steps.
pub fn lanczos_fx<O: SymmetricOperator + ?Sized>(
    op: &O,
    f: MatrixFunction,
    x: &DVector<f64>,
    iters: usize,
) -> Result<DVector<f64>> {
    let krylov = lanczos(op, x, iters)?;
    if krylov.alpha.is_empty() {
        return Ok(DVector::zeros(op.dim()));
    }
    let (theta, z) = tridiagonal_eigen(&krylov.alpha, &krylov.beta)?;
    let j = theta.len();
    let mut coeffs = DVector::zeros(j);
    for i in 0..j {
        let weight = z[(0, i)] * f.eval(theta[i])?;
        coeffs.axpy(weight, &z.column(i), 1.0);
    }
    Ok(&krylov.basis * coeffs * x.norm())
}

/// Eigen-decomposition of the symmetric tridiagonal matrix with diagonal `diag`
/// and off-diagonal `off` by implicit-shift QL iterations.
///
/// Returns eigenvalues and the orthogonal matrix of eigenvectors (columns).
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = diag.len();
    if off.len() + 1 != n.max(1) {
        return Err(TraceError::param("off-diagonal must have n - 1 entries"));
    }
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n.saturating_sub(1)].copy_from_slice(off);
    let mut z = DMatrix::identity(n, n);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(TraceError::Domain("tridiagonal QL iteration did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    let zf = z[(k, i + 1)];
                    z[(k, i + 1)] = s * z[(k, i)] + c * zf;
                    z[(k, i)] = c * z[(k, i)] - s * zf;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok((d, z))
}

/// `f(B)` behind the operator interface, each column approximated by `iters`
/// Lanczos steps on `B`.
#[derive(Debug)]
pub struct FunctionOperator<B> {
    base: B,
    function: MatrixFunction,
    iters: usize,
    counter: MatvecCounter,
}

impl<B: SymmetricOperator> FunctionOperator<B> {
    pub fn new(base: B, function: MatrixFunction, iters: usize) -> Result<Self> {
        if iters < 1 {
            return Err(TraceError::param("Lanczos needs at least one iteration"));
        }
        Ok(Self {
            base,
            function,
            iters,
            counter: MatvecCounter::new(),
        })
    }

    pub fn base(&self) -> &B {
        &self.base
    }
}

impl<B: SymmetricOperator> SymmetricOperator for FunctionOperator<B> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }

    fn apply_uncounted(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for j in 0..x.ncols() {
            let y = lanczos_fx(&self.base, self.function, &x.column(j).into_owned(), self.iters)?;
            out.set_column(j, &y);
        }
        Ok(out)
    }

    fn base_matvecs(&self) -> u64 {
        self.base.base_matvecs()
    }
}
