use nalgebra::DMatrix;

use super::{MatvecCounter, SymmetricOperator};
use crate::error::{Result, TraceError};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicate positions are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(i, j, _) in &entries {
            if i >= n_rows || j >= n_cols {
                return Err(TraceError::param(format!(
                    "entry ({i}, {j}) outside a {n_rows} x {n_cols} matrix"
                )));
            }
        }
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            indices.push(j);
            values.push(v);
            indptr[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..n_rows {
            indptr[i + 1] += indptr[i];
        }
        Ok(Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.n_rows
    }

    pub fn ncols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| self.row(i).find(|&(j, _)| j == i).map_or(0.0, |(_, v)| v))
            .collect()
    }

    pub fn mul_slice(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    pub fn transpose(&self) -> CsrMatrix {
        let triplets = (0..self.n_rows).flat_map(|i| self.row(i).map(move |(j, v)| (j, i, v)));
        CsrMatrix::from_triplets(self.n_cols, self.n_rows, triplets.collect::<Vec<_>>())
            .expect("transpose indices are in range")
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        if self.n_rows != self.n_cols {
            return f64::INFINITY;
        }
        let t = self.transpose();
        let mut worst: f64 = 0.0;
        for i in 0..self.n_rows {
            let mut a: Vec<(usize, f64)> = self.row(i).collect();
            let b: Vec<(usize, f64)> = t.row(i).collect();
            a.extend(b.iter().map(|&(j, v)| (j, -v)));
            a.sort_unstable_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < a.len() {
                let j = a[k].0;
                let mut s = 0.0;
                while k < a.len() && a[k].0 == j {
                    s += a[k].1;
                    k += 1;
                }
                worst = worst.max(s.abs());
            }
        }
        worst
    }

    /// `(A + A^T) / 2`.
    pub fn symmetrized(&self) -> CsrMatrix {
        let t = self.transpose();
        let triplets = (0..self.n_rows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, 0.5 * v)))
            .chain((0..t.n_rows).flat_map(|i| t.row(i).map(move |(j, v)| (i, j, 0.5 * v))))
            .collect::<Vec<_>>();
        CsrMatrix::from_triplets(self.n_rows, self.n_cols, triplets).expect("same shape")
    }
}

/// Symmetric sparse matrix behind the operator interface.
#[derive(Debug)]
pub struct SparseOperator {
    matrix: CsrMatrix,
    counter: MatvecCounter,
}

impl SparseOperator {
    /// Wraps a square matrix, symmetrizing it when `|A - A^T|_max > 1e-12`.
    pub fn new(matrix: CsrMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(TraceError::Dimension {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let matrix = if matrix.asymmetry() > 1e-12 {
            matrix.symmetrized()
        } else {
            matrix
        };
        Ok(Self {
            matrix,
            counter: MatvecCounter::new(),
        })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }
}

impl SymmetricOperator for SparseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }

    fn apply_uncounted(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.dim(), x.ncols());
        for j in 0..x.ncols() {
            self.matrix
                .mul_slice(x.column(j).as_slice(), out.column_mut(j).as_mut_slice());
        }
        Ok(out)
    }
}

/// 5-point discrete Laplacian (stencil 4, -1) on a `k x k` mesh with Dirichlet boundary.
pub fn poisson_2d(k: usize) -> CsrMatrix {
    let n = k * k;
    let idx = |r: usize, c: usize| r * k + c;
    let mut triplets = Vec::with_capacity(5 * n);
    for r in 0..k {
        for c in 0..k {
            let i = idx(r, c);
            triplets.push((i, i, 4.0));
            if r > 0 {
                triplets.push((i, idx(r - 1, c), -1.0));
            }
            if r + 1 < k {
                triplets.push((i, idx(r + 1, c), -1.0));
            }
            if c > 0 {
                triplets.push((i, idx(r, c - 1), -1.0));
            }
            if c + 1 < k {
                triplets.push((i, idx(r, c + 1), -1.0));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, triplets).expect("mesh indices are in range")
}
