//! Incremental randomized range finder with the shifted objective
//! `m~(r) = 2 r + C (|Q^T A Q|_F^2 - 2 |A Q|_F^2)`, which has the same minimizer
//! as `m(r) = 2 r + C |A_rest|_F^2` but needs no knowledge of `|A|_F`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TraceError};
use crate::linop::SymmetricOperator;
use crate::sketch::ProbeStream;

/// Columns whose deflated norm falls below this fraction of their original norm are null.
pub const NULL_TOL: f64 = 1e-12;

/// How a block size `b > 1` interacts with the stopping decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockSchedule {
    /// Decisions once per block: the range finder stops when the last block increased `m~`,
    /// the Hutchinson loop tests `M_k <= k` only at multiples of `b`.
    #[default]
    Coarse,
    /// Matvecs are issued `b` at a time but every decision is taken column by column with the
    /// `b = 1` rules, so results do not depend on `b`. Matvecs computed past a stopping point
    /// are reported as wasted.
    Batched,
}

#[derive(Debug, Clone)]
pub struct RangeState {
    basis: DMatrix<f64>,
    trest1: f64,
    frob_aq2: f64,
    frob_qaq2: f64,
    history: Vec<(usize, f64)>,
    sample_constant: f64,
    matvecs: u64,
}

/// Outcome of one [`RangeState::advance`] call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advance {
    /// The basis grew by this many columns.
    Grew(usize),
    /// Every probe column was numerically inside the current range.
    Degenerate,
}

impl RangeState {
    pub fn new(n: usize, sample_constant: f64) -> Self {
        Self {
            basis: DMatrix::zeros(n, 0),
            trest1: 0.0,
            frob_aq2: 0.0,
            frob_qaq2: 0.0,
            history: Vec::new(),
            sample_constant,
            matvecs: 0,
        }
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn into_basis(self) -> DMatrix<f64> {
        self.basis
    }

    /// Running `tr(Q^T A Q)`.
    pub fn trest1(&self) -> f64 {
        self.trest1
    }

    pub fn frob_aq2(&self) -> f64 {
        self.frob_aq2
    }

    pub fn frob_qaq2(&self) -> f64 {
        self.frob_qaq2
    }

    pub fn sample_constant(&self) -> f64 {
        self.sample_constant
    }

    /// `(r, m~(r))` after every update.
    pub fn history(&self) -> &[(usize, f64)] {
        &self.history
    }

    /// Matvecs spent so far, including those on discarded columns.
    pub fn matvecs_used(&self) -> u64 {
        self.matvecs
    }

    fn mtilde(&self) -> f64 {
        2.0 * self.rank() as f64 + self.sample_constant * (self.frob_qaq2 - 2.0 * self.frob_aq2)
    }

    /// Rank at which the recorded `m~` is smallest (first one on ties).
    pub fn detected_minimum(&self) -> Option<usize> {
        self.history
            .iter()
            .fold(None, |best: Option<(usize, f64)>, &(r, m)| match best {
                Some((_, bm)) if bm <= m => best,
                _ => Some((r, m)),
            })
            .map(|(r, _)| r)
    }

    /// Deflates `y` against the columns of `basis` and normalizes it, or returns `None` for a
    /// numerically null column.
    fn orthonormalize(basis: &DMatrix<f64>, y: DVector<f64>) -> Option<DVector<f64>> {
        let y_norm = y.norm();
        if y_norm == 0.0 || !y_norm.is_finite() {
            return None;
        }
        let mut v = y;
        let mut before = y_norm;
        for pass in 0..2 {
            if basis.ncols() > 0 {
                let c = basis.tr_mul(&v);
                v.gemv(-1.0, basis, &c, 1.0);
            }
            let after = v.norm();
            if pass == 0 && after >= before / std::f64::consts::SQRT_2 {
                break;
            }
            before = after;
        }
        let norm = v.norm();
        if norm <= NULL_TOL * y_norm {
            None
        } else {
            Some(v / norm)
        }
    }

    /// Orthonormal directions for the columns of `y`, column by column, each deflated against
    /// the basis extended by the directions accepted before it. Stops at the first null
    /// column when `stop_at_null` is set.
    fn new_directions(&self, y: &DMatrix<f64>, stop_at_null: bool) -> (Vec<DVector<f64>>, bool) {
        let mut accepted: Vec<DVector<f64>> = Vec::with_capacity(y.ncols());
        let mut work = self.basis.clone();
        let mut hit_null = false;
        for j in 0..y.ncols() {
            match Self::orthonormalize(&work, y.column(j).into_owned()) {
                Some(q) => {
                    let r = work.ncols();
                    work = work.insert_column(r, 0.0);
                    work.set_column(r, &q);
                    accepted.push(q);
                }
                None => {
                    hit_null = true;
                    if stop_at_null {
                        break;
                    }
                }
            }
        }
        (accepted, hit_null)
    }

    /// Adds the orthonormal block `q_hat` with `w = A q_hat` and records one `m~` entry.
    fn absorb(&mut self, q_hat: &DMatrix<f64>, w: &DMatrix<f64>) {
        let mut new_trace = 0.0;
        for j in 0..q_hat.ncols() {
            new_trace += q_hat.column(j).dot(&w.column(j));
        }
        self.trest1 += new_trace;
        self.frob_aq2 += w.norm_squared();
        let cross = if self.rank() > 0 {
            self.basis.tr_mul(w).norm_squared()
        } else {
            0.0
        };
        self.frob_qaq2 += q_hat.tr_mul(w).norm_squared() + 2.0 * cross;
        let mut grown = DMatrix::zeros(self.basis.nrows(), self.rank() + q_hat.ncols());
        grown.columns_mut(0, self.rank()).copy_from(&self.basis);
        grown.columns_mut(self.rank(), q_hat.ncols()).copy_from(q_hat);
        self.basis = grown;
        let m = self.mtilde();
        self.history.push((self.rank(), m));
    }

    /// One block step: `Y = A probes`, deflation, `W = A Q_hat`, running sums, one history
    /// entry. Null columns are dropped; a block of only null columns is degenerate.
    pub fn advance<O: SymmetricOperator + ?Sized>(&mut self, op: &O, probes: &DMatrix<f64>) -> Result<Advance> {
        if probes.ncols() == 0 {
            return Err(TraceError::param("probe block must have at least one column"));
        }
        let y = op.apply(probes)?;
        self.matvecs += probes.ncols() as u64;
        let (accepted, _) = self.new_directions(&y, false);
        if accepted.is_empty() {
            return Ok(Advance::Degenerate);
        }
        let q_hat = DMatrix::from_columns(&accepted);
        let w = op.apply(&q_hat)?;
        self.matvecs += q_hat.ncols() as u64;
        self.absorb(&q_hat, &w);
        Ok(Advance::Grew(q_hat.ncols()))
    }
}

/// Stopping test on an `m~` history: two consecutive strict increases for `b = 1`, one
/// strict increase otherwise. Equal values do not count as an increase.
pub fn should_stop(history: &[(usize, f64)], block: usize) -> bool {
    let h = history.len();
    if block <= 1 {
        h >= 3 && history[h - 1].1 > history[h - 2].1 && history[h - 2].1 > history[h - 3].1
    } else {
        h >= 2 && history[h - 1].1 > history[h - 2].1
    }
}

/// Why the range finder stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeStop {
    /// A minimum of `m~` was detected.
    Minimum,
    /// Probes no longer add directions: `A` is numerically of rank `r`.
    Degenerate,
    /// The rank reached `n / 2`.
    RankCap,
}

#[derive(Debug, Clone)]
pub struct RangeOutcome {
    pub state: RangeState,
    pub stop: RangeStop,
    /// Matvecs spent on columns computed beyond the stopping point.
    pub wasted_matvecs: u64,
}

/// Runs the range finder until a minimum of `m~` is detected, the range is exhausted, or the
/// rank reaches `n / 2`. Probes come from `stream`, `block` columns at a time.
pub fn find_range<O: SymmetricOperator + ?Sized>(
    op: &O,
    stream: &mut ProbeStream,
    sample_constant: f64,
    block: usize,
    schedule: BlockSchedule,
) -> Result<RangeOutcome> {
    if block < 1 {
        return Err(TraceError::param("block size must be at least 1"));
    }
    let n = op.dim();
    let cap = (n / 2).max(1);
    let mut state = RangeState::new(n, sample_constant);
    let mut wasted = 0u64;
    let per_column = block == 1 || schedule == BlockSchedule::Batched;
    loop {
        let cols = block.min(cap - state.rank());
        let probes = stream.draw_block(cols);
        if !per_column {
            if state.advance(op, &probes)? == Advance::Degenerate {
                return Ok(finish(state, RangeStop::Degenerate, wasted));
            }
            if state.rank() >= cap {
                return Ok(finish(state, RangeStop::RankCap, wasted));
            }
            if should_stop(&state.history, block) {
                return Ok(finish(state, RangeStop::Minimum, wasted));
            }
            continue;
        }
        let y = op.apply(&probes)?;
        state.matvecs += cols as u64;
        let (accepted, hit_null) = state.new_directions(&y, true);
        // columns after a null one are never looked at, as with b = 1
        wasted += (cols - accepted.len() - usize::from(hit_null)) as u64;
        if accepted.is_empty() {
            return Ok(finish(state, RangeStop::Degenerate, wasted));
        }
        let q_hat = DMatrix::from_columns(&accepted);
        let w = op.apply(&q_hat)?;
        state.matvecs += q_hat.ncols() as u64;
        for j in 0..q_hat.ncols() {
            state.absorb(&q_hat.columns(j, 1).into_owned(), &w.columns(j, 1).into_owned());
            let stop = if state.rank() >= cap {
                Some(RangeStop::RankCap)
            } else if should_stop(&state.history, 1) {
                Some(RangeStop::Minimum)
            } else {
                None
            };
            if let Some(stop) = stop {
                let unused = (q_hat.ncols() - j - 1) as u64;
                let tail_nulls = u64::from(hit_null);
                return Ok(finish(state, stop, wasted + 2 * unused + tail_nulls));
            }
        }
        if hit_null {
            return Ok(finish(state, RangeStop::Degenerate, wasted));
        }
    }
}

fn finish(state: RangeState, stop: RangeStop, wasted_matvecs: u64) -> RangeOutcome {
    RangeOutcome {
        state,
        stop,
        wasted_matvecs,
    }
}
