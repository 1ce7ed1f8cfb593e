//! Reproducible random probe blocks.
//!
//! Column `j` of a [`ProbeStream`] is a pure function of `(seed, domain, j, kind)`:
//! each column is drawn from its own ChaCha8 stream, so the column a caller
//! receives does not depend on how earlier columns were grouped into blocks.

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const COLUMN_BITS: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Gaussian,
    Rademacher,
}

/// Well-known domains separating the probe families used inside one estimator run.
pub mod domain {
    /// Range-finder / first sketch block.
    pub const RANGE: u64 = 0;
    /// Second block (Hutch++ Psi, Frobenius probes, Nystrom++ Phi).
    pub const RESIDUAL: u64 = 1;
    /// Third block (prototype trace probes, Single-Pass Phi).
    pub const THIRD: u64 = 2;
    /// Random orthogonal factors of synthetic fixtures.
    pub const FIXTURE: u64 = 0x1000;
    /// Sparse random vectors of the log-determinant fixture.
    pub const SPRANDN: u64 = 0x1001;
    /// Sparsity masks of the log-determinant fixture.
    pub const SPRANDN_MASK: u64 = 0x1002;
}

#[derive(Debug, Clone)]
pub struct ProbeStream {
    seed: u64,
    n: usize,
    kind: ProbeKind,
    domain: u64,
    next_column: u64,
}

impl ProbeStream {
    pub fn new(seed: u64, n: usize, kind: ProbeKind) -> Self {
        Self {
            seed,
            n,
            kind,
            domain: domain::RANGE,
            next_column: 0,
        }
    }

    /// Same seed, different independent family of columns.
    pub fn with_domain(mut self, domain: u64) -> Self {
        self.domain = domain;
        self.next_column = 0;
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> ProbeKind {
        self.kind
    }

    pub fn next_column_index(&self) -> u64 {
        self.next_column
    }

    fn rng_for(&self, column: u64) -> ChaCha8Rng {
        debug_assert!(column < (1 << COLUMN_BITS));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((self.domain << COLUMN_BITS) | column);
        rng
    }

    /// Column `index` of the stream, independent of the cursor.
    pub fn column(&self, index: u64) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        self.fill_column(index, out.as_mut_slice());
        out
    }

    fn fill_column(&self, index: u64, out: &mut [f64]) {
        let mut rng = self.rng_for(index);
        match self.kind {
            ProbeKind::Gaussian => {
                for pair in out.chunks_mut(2) {
                    let (z0, z1) = box_muller(rng.next_u64(), rng.next_u64());
                    pair[0] = z0;
                    if pair.len() > 1 {
                        pair[1] = z1;
                    }
                }
            }
            ProbeKind::Rademacher => {
                for chunk in out.chunks_mut(64) {
                    let bits = rng.next_u64();
                    for (i, v) in chunk.iter_mut().enumerate() {
                        *v = if (bits >> i) & 1 == 1 { 1.0 } else { -1.0 };
                    }
                }
            }
        }
    }

    /// Column `index` with entries uniform on `[0, 1)`, from the same substream as
    /// [`column`](Self::column). Ignores the probe kind.
    pub fn uniform_column(&self, index: u64) -> DVector<f64> {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let mut rng = self.rng_for(index);
        DVector::from_fn(self.n, |_, _| (rng.next_u64() >> 11) as f64 * SCALE)
    }

    /// Returns the next `cols` columns and advances the cursor.
    pub fn draw_block(&mut self, cols: usize) -> DMatrix<f64> {
        let mut block = DMatrix::zeros(self.n, cols);
        for j in 0..cols {
            let index = self.next_column + j as u64;
            self.fill_column(index, block.column_mut(j).as_mut_slice());
        }
        self.next_column += cols as u64;
        block
    }
}

/// Maps two uniform words to two independent standard normals.
fn box_muller(a: u64, b: u64) -> (f64, f64) {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    // u1 in (0, 1] keeps the logarithm finite.
    let u1 = ((a >> 11) + 1) as f64 * SCALE;
    let u2 = (b >> 11) as f64 * SCALE;
    let radius = (-2.0 * u1.ln()).sqrt();
    let angle = std::f64::consts::TAU * u2;
    (radius * angle.cos(), radius * angle.sin())
}
