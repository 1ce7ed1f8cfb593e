//! Trace estimators with exact matvec accounting.
//!
//! Probe blocks come from disjoint [`domain`]s of one seed: the range finder (or the
//! sketch `Omega`) reads `RANGE`, the first Hutchinson phase reads `RESIDUAL`, and a
//! third independent block reads `THIRD`. Matvec counts in a [`TraceReport`] are
//! tallied by the estimator itself, so they stay exact when an operator is shared
//! between threads; `base_matvecs` is read off the operator and is only meaningful
//! when no other thread uses it concurrently.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TraceError};
use crate::linop::{RestOperator, SymmetricOperator};
use crate::nystrom::nystrom_factor_from_sketch;
use crate::rangefinder::{find_range, BlockSchedule, RangeOutcome, RangeStop};
use crate::sketch::{domain, ProbeKind, ProbeStream};
use crate::special::{alpha_k_cached, default_frobenius_probes, min_samples_floor, sample_constant, TailConstants};

/// Largest probe block drawn at once by the plain Hutchinson loops.
const CHUNK: usize = 256;

/// Condition number of the single-pass core above which the estimate is refused.
pub const MAX_CORE_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub estimate: f64,
    pub matvecs_total: u64,
    pub matvecs_lowrank: u64,
    pub matvecs_hutchinson: u64,
    pub rank_used: usize,
    /// Over-estimate of `|A_rest|_F^2` driving the adaptive sample count.
    pub frob_overestimate: Option<f64>,
    /// Matvecs with the innermost operator (for example `B` when estimating `tr(B^3)`).
    pub base_matvecs: u64,
    pub seed: u64,
    /// Budget actually used by fixed-budget estimators after rounding.
    pub budget: Option<usize>,
    /// Number of quadratic forms averaged in the Hutchinson phase.
    pub samples: usize,
    /// Matvecs computed past a stopping point (batched block schedule only).
    pub wasted_matvecs: u64,
    pub range_stop: Option<RangeStop>,
}

impl TraceReport {
    fn fixed(estimate: f64, lowrank: u64, hutchinson: u64, rank: usize, seed: u64, budget: usize) -> Self {
        Self {
            estimate,
            matvecs_total: lowrank + hutchinson,
            matvecs_lowrank: lowrank,
            matvecs_hutchinson: hutchinson,
            rank_used: rank,
            frob_overestimate: None,
            base_matvecs: 0,
            seed,
            budget: Some(budget),
            samples: hutchinson as usize,
            wasted_matvecs: 0,
            range_stop: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Keeps the slack `ell > 0` and the sample floor, as required by the failure bound.
    Guaranteed,
    /// `ell = 0` and no floor.
    Practical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    /// Absolute error tolerance.
    pub eps: f64,
    pub delta: f64,
    pub ell: f64,
    pub block: usize,
    pub seed: u64,
    pub mode: Mode,
    #[serde(default)]
    pub schedule: BlockSchedule,
    #[serde(default = "gaussian")]
    pub probes: ProbeKind,
    /// Frobenius probes `k` of the prototype; `ceil(10 log(2 / delta))` when absent.
    #[serde(default)]
    pub frobenius_probes: Option<usize>,
}

fn gaussian() -> ProbeKind {
    ProbeKind::Gaussian
}

impl AdaptiveConfig {
    pub fn practical(eps: f64, delta: f64, seed: u64) -> Self {
        Self {
            eps,
            delta,
            ell: 0.0,
            block: 1,
            seed,
            mode: Mode::Practical,
            schedule: BlockSchedule::Coarse,
            probes: ProbeKind::Gaussian,
            frobenius_probes: None,
        }
    }

    pub fn guaranteed(eps: f64, delta: f64, ell: f64, seed: u64) -> Self {
        Self {
            ell,
            mode: Mode::Guaranteed,
            ..Self::practical(eps, delta, seed)
        }
    }

    pub fn with_block(mut self, block: usize, schedule: BlockSchedule) -> Self {
        self.block = block;
        self.schedule = schedule;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Validated constants; practical mode always uses `ell = 0`.
    pub fn tail_constants(&self) -> Result<TailConstants> {
        if self.block < 1 {
            return Err(TraceError::param("block size must be at least 1"));
        }
        if self.probes != ProbeKind::Gaussian {
            return Err(TraceError::param(
                "adaptive estimators need Gaussian probes; their constants do not hold for Rademacher",
            ));
        }
        let ell = match self.mode {
            Mode::Practical => 0.0,
            Mode::Guaranteed if self.ell > 0.0 => self.ell,
            Mode::Guaranteed => return Err(TraceError::param("guaranteed mode needs ell > 0")),
        };
        TailConstants::new(self.eps, self.delta, ell)
    }
}

/// `sum_j x_j^T A x_j` over `count` fresh columns of `stream`, in chunks.
fn quadratic_form_sum<O: SymmetricOperator + ?Sized>(op: &O, stream: &mut ProbeStream, count: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut left = count;
    while left > 0 {
        let cols = left.min(CHUNK);
        let x = stream.draw_block(cols);
        let ax = op.apply(&x)?;
        total += column_dots(&x, &ax);
        left -= cols;
    }
    Ok(total)
}

/// `tr(X^T Y)` summed column by column.
fn column_dots(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let mut total = 0.0;
    for j in 0..x.ncols() {
        total += x.column(j).dot(&y.column(j));
    }
    total
}

/// Hutchinson's estimator `(1/m) tr(X^T A X)` with `m` probes.
pub fn hutchinson<O: SymmetricOperator + ?Sized>(op: &O, m: usize, kind: ProbeKind, seed: u64) -> Result<TraceReport> {
    if m < 1 {
        return Err(TraceError::param("Hutchinson needs at least one probe"));
    }
    let base_start = op.base_matvecs();
    let mut stream = ProbeStream::new(seed, op.dim(), kind).with_domain(domain::RANGE);
    let sum = quadratic_form_sum(op, &mut stream, m)?;
    let mut report = TraceReport::fixed(sum / m as f64, 0, m as u64, 0, seed, m);
    report.base_matvecs = op.base_matvecs() - base_start;
    Ok(report)
}

/// Hutchinson's estimator on caller-supplied probe columns.
pub fn hutchinson_with_probes<O: SymmetricOperator + ?Sized>(op: &O, probes: &DMatrix<f64>) -> Result<TraceReport> {
    let m = probes.ncols();
    if m < 1 {
        return Err(TraceError::param("Hutchinson needs at least one probe"));
    }
    let base_start = op.base_matvecs();
    let ax = op.apply(probes)?;
    let mut report = TraceReport::fixed(column_dots(probes, &ax) / m as f64, 0, m as u64, 0, 0, m);
    report.base_matvecs = op.base_matvecs() - base_start;
    Ok(report)
}

/// Hutch++ with budget `m` rounded down to a multiple of 3: `m/3` sketch columns, `m/3`
/// products with the basis, `m/3` Hutchinson probes on the deflated operator.
pub fn hutch_pp<O: SymmetricOperator + ?Sized>(op: &O, m: usize, kind: ProbeKind, seed: u64) -> Result<TraceReport> {
    let budget = m - m % 3;
    if budget < 3 {
        return Err(TraceError::param(format!(
            "Hutch++ needs a budget of at least 3, got {m}"
        )));
    }
    let s = budget / 3;
    let n = op.dim();
    let base_start = op.base_matvecs();
    let omega = ProbeStream::new(seed, n, kind).with_domain(domain::RANGE).draw_block(s);
    let y = op.apply(&omega)?;
    let q = y.qr().q();
    let aq = op.apply(&q)?;
    let low_rank = column_dots(&q, &aq);
    let rest = RestOperator::new(op, q)?;
    let psi = ProbeStream::new(seed, n, kind)
        .with_domain(domain::RESIDUAL)
        .draw_block(s);
    let residual = column_dots(&psi, &rest.apply(&psi)?) / s as f64;
    let mut report = TraceReport::fixed(low_rank + residual, 2 * s as u64, s as u64, aq.ncols(), seed, budget);
    report.base_matvecs = op.base_matvecs() - base_start;
    Ok(report)
}

fn range_phase<O: SymmetricOperator + ?Sized>(op: &O, cfg: &AdaptiveConfig, c: f64) -> Result<RangeOutcome> {
    let mut stream = ProbeStream::new(cfg.seed, op.dim(), ProbeKind::Gaussian).with_domain(domain::RANGE);
    find_range(op, &mut stream, c, cfg.block, cfg.schedule)
}

fn adaptive_report(range: &RangeOutcome, cfg: &AdaptiveConfig) -> TraceReport {
    let lowrank = range.state.matvecs_used();
    TraceReport {
        estimate: range.state.trest1(),
        matvecs_total: lowrank,
        matvecs_lowrank: lowrank,
        matvecs_hutchinson: 0,
        rank_used: range.state.rank(),
        frob_overestimate: None,
        base_matvecs: 0,
        seed: cfg.seed,
        budget: None,
        samples: 0,
        wasted_matvecs: range.wasted_matvecs,
        range_stop: Some(range.stop),
    }
}

/// The prototype adaptive estimator: range finder to the minimum of `m~`, then `k` fresh
/// probes to over-estimate `|A_rest|_F^2`, then `M` fresh probes for `tr(A_rest)`.
///
/// In guaranteed mode `M` is at least the sample floor for `ell`; practical mode drops it.
pub fn prototype_adaptive<O: SymmetricOperator + ?Sized>(op: &O, cfg: &AdaptiveConfig) -> Result<TraceReport> {
    let tc = cfg.tail_constants()?;
    let c = sample_constant(&tc);
    let base_start = op.base_matvecs();
    let range = range_phase(op, cfg, c)?;
    let mut report = adaptive_report(&range, cfg);
    if range.stop == RangeStop::Degenerate {
        report.frob_overestimate = Some(0.0);
        report.base_matvecs = op.base_matvecs() - base_start;
        return Ok(report);
    }
    let n = op.dim();
    let rest = RestOperator::new(op, range.state.basis().clone())?;
    let k = cfg
        .frobenius_probes
        .unwrap_or_else(|| default_frobenius_probes(cfg.delta));
    if k < 1 {
        return Err(TraceError::param("at least one Frobenius probe is needed"));
    }
    let alpha = alpha_k_cached(k, cfg.delta)?.value;
    let psi = ProbeStream::new(cfg.seed, n, ProbeKind::Gaussian)
        .with_domain(domain::RESIDUAL)
        .draw_block(k);
    let frob = rest.apply(&psi)?.norm_squared() / (k as f64 * alpha);
    if !frob.is_finite() {
        return Err(TraceError::Domain(format!("Frobenius estimate is not finite ({frob})")));
    }
    let mut samples = (c * frob).ceil() as usize;
    if cfg.mode == Mode::Guaranteed {
        samples = samples.max(min_samples_floor(cfg.delta, tc.ell)? as usize);
    }
    let mut third = ProbeStream::new(cfg.seed, n, ProbeKind::Gaussian).with_domain(domain::THIRD);
    let trest2 = if samples == 0 {
        0.0
    } else {
        quadratic_form_sum(&rest, &mut third, samples)? / samples as f64
    };
    report.estimate += trest2;
    report.frob_overestimate = Some(frob);
    report.samples = samples;
    report.matvecs_hutchinson = (k + samples) as u64;
    report.matvecs_total += report.matvecs_hutchinson;
    report.base_matvecs = op.base_matvecs() - base_start;
    Ok(report)
}

/// A-Hutch++: range finder to the minimum of `m~`, then Hutchinson on `A_rest` with probes
/// added `b` at a time until `M_k = C (|A_rest Psi|_F^2 / (k alpha_k)) <= k`. The same `k`
/// products give both the Frobenius over-estimate and the trace estimate.
pub fn a_hutch_pp<O: SymmetricOperator + ?Sized>(op: &O, cfg: &AdaptiveConfig) -> Result<TraceReport> {
    if cfg.mode != Mode::Practical {
        return Err(TraceError::param("A-Hutch++ runs in practical mode (ell = 0)"));
    }
    let tc = cfg.tail_constants()?;
    let c = sample_constant(&tc);
    let base_start = op.base_matvecs();
    let range = range_phase(op, cfg, c)?;
    let mut report = adaptive_report(&range, cfg);
    if range.stop == RangeStop::Degenerate {
        report.frob_overestimate = Some(0.0);
        report.base_matvecs = op.base_matvecs() - base_start;
        return Ok(report);
    }
    let rest = RestOperator::new(op, range.state.basis().clone())?;
    let mut stream = ProbeStream::new(cfg.seed, op.dim(), ProbeKind::Gaussian).with_domain(domain::RESIDUAL);
    let per_column = cfg.block == 1 || cfg.schedule == BlockSchedule::Batched;
    let (mut k, mut frob_sum, mut trace_sum, mut computed) = (0usize, 0.0, 0.0, 0u64);
    let crossing = |k: usize, frob_sum: f64| -> Result<Option<f64>> {
        let alpha = alpha_k_cached(k, cfg.delta)?.value;
        let frob = frob_sum / (k as f64 * alpha);
        if !frob.is_finite() {
            return Err(TraceError::Domain(format!("Frobenius estimate is not finite ({frob})")));
        }
        Ok((c * frob <= k as f64).then_some(frob))
    };
    let frob = 'outer: loop {
        let psi = stream.draw_block(cfg.block);
        let cblock = rest.apply(&psi)?;
        computed += cfg.block as u64;
        for j in 0..cfg.block {
            frob_sum += cblock.column(j).norm_squared();
            trace_sum += psi.column(j).dot(&cblock.column(j));
            if per_column {
                k += 1;
                if let Some(frob) = crossing(k, frob_sum)? {
                    break 'outer frob;
                }
            }
        }
        if !per_column {
            k += cfg.block;
            if let Some(frob) = crossing(k, frob_sum)? {
                break frob;
            }
        }
    };
    report.estimate += trace_sum / k as f64;
    report.frob_overestimate = Some(frob);
    report.samples = k;
    report.matvecs_hutchinson = computed;
    report.matvecs_total += computed;
    report.wasted_matvecs += computed - k as u64;
    report.base_matvecs = op.base_matvecs() - base_start;
    Ok(report)
}

/// Fractions of the budget spent on the three probe blocks of Single Pass Hutch++.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinglePassSplit {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for SinglePassSplit {
    fn default() -> Self {
        Self {
            c1: 0.32,
            c2: 0.35,
            c3: 0.33,
        }
    }
}

impl SinglePassSplit {
    /// Block sizes `floor(c_i m)` after validating the constants.
    pub fn block_sizes(&self, m: usize) -> Result<[usize; 3]> {
        let c = [self.c1, self.c2, self.c3];
        if c.iter().any(|&ci| !(ci > 0.0)) || !(self.c1 < self.c2) || (c.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(TraceError::param(format!(
                "single-pass constants need 0 < c1 < c2, c3 > 0 and c1 + c2 + c3 = 1, got {c:?}"
            )));
        }
        let sizes = c.map(|ci| (ci * m as f64 + 1e-9).floor() as usize);
        if sizes.contains(&0) {
            return Err(TraceError::param(format!(
                "budget {m} leaves an empty probe block ({sizes:?})"
            )));
        }
        Ok(sizes)
    }
}

/// Single Pass Hutch++: one batched product `[X Y Z] = A [Omega Psi Phi]` and the
/// low-rank approximation `Y (Omega^T Y)^+ X^T`, evaluated through a thin QR of
/// `(Omega^T Y)^T`.
pub fn single_pass_hutch_pp<O: SymmetricOperator + ?Sized>(
    op: &O,
    m: usize,
    split: SinglePassSplit,
    seed: u64,
) -> Result<TraceReport> {
    let [s1, s2, s3] = split.block_sizes(m)?;
    let n = op.dim();
    let base_start = op.base_matvecs();
    let gaussian = |d: u64, cols: usize| {
        ProbeStream::new(seed, n, ProbeKind::Gaussian)
            .with_domain(d)
            .draw_block(cols)
    };
    let omega = gaussian(domain::RANGE, s1);
    let psi = gaussian(domain::RESIDUAL, s2);
    let phi = gaussian(domain::THIRD, s3);
    let mut probes = DMatrix::zeros(n, s1 + s2 + s3);
    probes.columns_mut(0, s1).copy_from(&omega);
    probes.columns_mut(s1, s2).copy_from(&psi);
    probes.columns_mut(s1 + s2, s3).copy_from(&phi);
    let sketch = op.apply(&probes)?;
    let x = sketch.columns(0, s1).into_owned();
    let y = sketch.columns(s1, s2).into_owned();
    let z = sketch.columns(s1 + s2, s3);

    let qr = y.tr_mul(&omega).qr();
    let (q, r) = (qr.q(), qr.r());
    let sv = r.singular_values();
    let condition = sv.max() / sv.min();
    if !(condition <= MAX_CORE_CONDITION) {
        return Err(TraceError::RankDeficient { condition });
    }
    let s = &y * q;
    // Zc = X R^-1, computed as (R^-T X^T)^T
    let zc_t = r
        .transpose()
        .solve_lower_triangular(&x.transpose())
        .ok_or(TraceError::RankDeficient { condition })?;
    let mut low_rank = 0.0;
    for j in 0..s.ncols() {
        low_rank += s.column(j).dot(&zc_t.row(j).transpose());
    }
    let s_phi = s.tr_mul(&phi);
    let zc_phi = &zc_t * &phi;
    let correction = column_dots(&phi, &z.into_owned()) - s_phi.dot(&zc_phi);
    let estimate = low_rank + correction / s3 as f64;
    let mut report = TraceReport::fixed(estimate, (s1 + s2) as u64, s3 as u64, s1, seed, s1 + s2 + s3);
    report.base_matvecs = op.base_matvecs() - base_start;
    Ok(report)
}

/// Nystrom++ with budget `m` rounded down to an even number: `m/2` sketch columns for the
/// stabilized Nystrom approximation and `m/2` Hutchinson probes on the remainder, all in
/// one batched product. `A` must be positive semidefinite.
pub fn nystrom_pp<O: SymmetricOperator + ?Sized>(op: &O, m: usize, seed: u64) -> Result<TraceReport> {
    let budget = m - m % 2;
    if budget < 2 {
        return Err(TraceError::param(format!(
            "Nystrom++ needs a budget of at least 2, got {m}"
        )));
    }
    let s = budget / 2;
    let n = op.dim();
    let base_start = op.base_matvecs();
    let omega = ProbeStream::new(seed, n, ProbeKind::Gaussian)
        .with_domain(domain::RANGE)
        .draw_block(s);
    let phi = ProbeStream::new(seed, n, ProbeKind::Gaussian)
        .with_domain(domain::RESIDUAL)
        .draw_block(s);
    let mut probes = DMatrix::zeros(n, 2 * s);
    probes.columns_mut(0, s).copy_from(&omega);
    probes.columns_mut(s, s).copy_from(&phi);
    let sketch = op.apply(&probes)?;
    let x = sketch.columns(0, s).into_owned();
    let y = sketch.columns(s, s).into_owned();
    let factors = nystrom_factor_from_sketch(&omega, &x)?;
    let residual = column_dots(&phi, &y) - factors.quadratic_form(&phi);
    let estimate = factors.trace() + residual / s as f64;
    let mut report = TraceReport::fixed(estimate, s as u64, s as u64, s, seed, budget);
    report.base_matvecs = op.base_matvecs() - base_start;
    Ok(report)
}
