use nalgebra::{DMatrix, DVector};

use super::{MatvecCounter, SymmetricOperator};
use crate::error::{Result, TraceError};

/// Symmetric tridiagonal matrix given by its main and first off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalBands {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl TridiagonalBands {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(TraceError::param(format!(
                "tridiagonal bands need n >= 1 diagonal and n - 1 off-diagonal entries, got {} and {}",
                diag.len(),
                off.len()
            )));
        }
        Ok(Self { diag, off })
    }

    /// `tridiag(off, diag, off)` with constant bands.
    pub fn toeplitz(n: usize, diag: f64, off: f64) -> Self {
        Self {
            diag: vec![diag; n],
            off: vec![off; n.saturating_sub(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::from_diagonal(&DVector::from_column_slice(&self.diag));
        for (i, &v) in self.off.iter().enumerate() {
            m[(i, i + 1)] = v;
            m[(i + 1, i)] = v;
        }
        debug_assert_eq!(m.nrows(), n);
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    /// Thomas algorithm on explicit bands.
    Tridiagonal,
    /// Conjugate gradients through the operator interface.
    Cg,
}

/// Forward-elimination coefficients of the Thomas algorithm.
#[derive(Debug)]
struct ThomasFactor {
    off: Vec<f64>,
    pivots: Vec<f64>,
}

impl ThomasFactor {
    fn new(bands: &TridiagonalBands) -> Result<Self> {
        let n = bands.dim();
        let mut pivots = Vec::with_capacity(n);
        let mut prev = bands.diag[0];
        if prev == 0.0 {
            return Err(TraceError::Domain("zero pivot in tridiagonal solve".into()));
        }
        pivots.push(prev);
        for i in 1..n {
            let p = bands.diag[i] - bands.off[i - 1] * bands.off[i - 1] / prev;
            if p == 0.0 || !p.is_finite() {
                return Err(TraceError::Domain(format!("zero pivot {i} in tridiagonal solve")));
            }
            pivots.push(p);
            prev = p;
        }
        Ok(Self {
            off: bands.off.clone(),
            pivots,
        })
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 1..n {
            x[i] -= self.off[i - 1] / self.pivots[i - 1] * x[i - 1];
        }
        x[n - 1] /= self.pivots[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = (x[i] - self.off[i] * x[i + 1]) / self.pivots[i];
        }
    }
}

enum Solver {
    Thomas(ThomasFactor),
    Cg {
        base: Box<dyn SymmetricOperator>,
        tol: f64,
        max_iter: usize,
    },
}

/// `B^{-1}` for symmetric positive definite `B`, applied by solving linear systems.
pub struct InverseOperator {
    solver: Solver,
    n: usize,
    counter: MatvecCounter,
}

impl std::fmt::Debug for InverseOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.solver {
            Solver::Thomas(_) => SolverKind::Tridiagonal,
            Solver::Cg { .. } => SolverKind::Cg,
        };
        f.debug_struct("InverseOperator")
            .field("n", &self.n)
            .field("kind", &kind)
            .finish()
    }
}

/// Relative residual tolerance used for CG when the caller does not pick one.
pub const DEFAULT_CG_TOL: f64 = 1e-10;

impl InverseOperator {
    pub fn tridiagonal(bands: &TridiagonalBands) -> Result<Self> {
        Ok(Self {
            n: bands.dim(),
            solver: Solver::Thomas(ThomasFactor::new(bands)?),
            counter: MatvecCounter::new(),
        })
    }

    /// CG with relative residual tolerance `tol` and at most `10 n` iterations.
    pub fn cg(base: Box<dyn SymmetricOperator>, tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(TraceError::param("CG tolerance must lie in (0, 1)"));
        }
        let n = base.dim();
        Ok(Self {
            n,
            solver: Solver::Cg {
                base,
                tol,
                max_iter: 10 * n,
            },
            counter: MatvecCounter::new(),
        })
    }

    pub fn kind(&self) -> SolverKind {
        match self.solver {
            Solver::Thomas(_) => SolverKind::Tridiagonal,
            Solver::Cg { .. } => SolverKind::Cg,
        }
    }
}

fn conjugate_gradient(base: &dyn SymmetricOperator, rhs: &[f64], tol: f64, max_iter: usize) -> Result<DVector<f64>> {
    let n = rhs.len();
    let b = DVector::from_column_slice(rhs);
    let b_norm = b.norm();
    let mut x = DVector::zeros(n);
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    for iter in 0..max_iter {
        if rr.sqrt() <= tol * b_norm {
            return Ok(x);
        }
        let ap = base.apply_vector(&p)?;
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            return Err(TraceError::Domain(format!(
                "CG met non-positive curvature {pap:e} at iteration {iter}; operator is not positive definite"
            )));
        }
        let step = rr / pap;
        x.axpy(step, &p, 1.0);
        r.axpy(-step, &ap, 1.0);
        let rr_next = r.norm_squared();
        p *= rr_next / rr;
        p += &r;
        rr = rr_next;
    }
    let residual = rr.sqrt() / b_norm;
    if residual <= tol {
        Ok(x)
    } else {
        Err(TraceError::Solver {
            iterations: max_iter,
            residual,
        })
    }
}

impl SymmetricOperator for InverseOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }

    fn apply_uncounted(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = x.clone();
        for j in 0..x.ncols() {
            match &self.solver {
                Solver::Thomas(factor) => factor.solve_in_place(out.column_mut(j).as_mut_slice()),
                Solver::Cg { base, tol, max_iter } => {
                    let z = conjugate_gradient(base.as_ref(), x.column(j).as_slice(), *tol, *max_iter)?;
                    out.set_column(j, &z);
                }
            }
        }
        Ok(out)
    }

    fn base_matvecs(&self) -> u64 {
        match &self.solver {
            Solver::Thomas(_) => self.matvecs(),
            Solver::Cg { base, .. } => base.base_matvecs(),
        }
    }
}
