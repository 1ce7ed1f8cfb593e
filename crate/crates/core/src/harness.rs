//! Experiment fixtures, sweeps and Monte Carlo failure tables.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TraceError};
use crate::estimators::{
    a_hutch_pp, hutch_pp, hutchinson, nystrom_pp, prototype_adaptive, single_pass_hutch_pp, AdaptiveConfig,
    SinglePassSplit, TraceReport,
};
use crate::io::{read_edge_list, read_matrix_market};
use crate::lanczos::{FunctionOperator, MatrixFunction};
use crate::linop::{
    CsrMatrix, DenseOperator, InverseOperator, LowRankUpdateOperator, PolynomialOperator, SparseOperator,
    SpectralOperator, SymmetricOperator, TridiagonalBands, DEFAULT_CG_TOL,
};
use crate::rangefinder::BlockSchedule;
use crate::sketch::{domain, ProbeKind, ProbeStream};

/// Largest dimension for which dense reference traces are computed and synthetic fixtures are
/// stored densely.
pub const DENSE_LIMIT: usize = 2000;

fn default_n() -> usize {
    1000
}
fn default_estrada_iters() -> usize {
    30
}
fn default_sprandn_n() -> usize {
    500
}
fn default_density() -> f64 {
    0.025
}
fn default_sprandn_iters() -> usize {
    25
}
fn default_matrix_iters() -> usize {
    35
}
fn default_mesh() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixtureSpec {
    /// `U diag(1 / i^c) U^T`.
    SyntheticAlgebraic {
        c: f64,
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    /// `U diag(exp(-i / s)) U^T`.
    SyntheticExponential {
        s: f64,
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    /// `B^3` for the adjacency matrix `B` of an edge list; `tr(B^3)` is six times the number
    /// of triangles.
    GraphTriangles { path: PathBuf },
    /// `exp(B)` for a graph adjacency matrix, by Lanczos.
    Estrada {
        path: PathBuf,
        #[serde(default = "default_estrada_iters")]
        iters: usize,
    },
    /// `log(I + sum_j w_j x_j x_j^T)` with 40 weights `10 / j^2`, 60 weights `1 / j^2` and
    /// sparse Gaussian `x_j`, by Lanczos.
    LogdetSprandn {
        #[serde(default = "default_sprandn_n")]
        n: usize,
        #[serde(default = "default_density")]
        density: f64,
        #[serde(default = "default_sprandn_iters")]
        iters: usize,
        #[serde(default)]
        seed: u64,
    },
    /// `log(B)` for a symmetric positive definite Matrix Market file, by Lanczos.
    LogdetMatrix {
        path: PathBuf,
        #[serde(default = "default_matrix_iters")]
        iters: usize,
    },
    /// Inverse of `tridiag(-1, 4, -1)`.
    InverseTridiag {
        #[serde(default = "default_n")]
        n: usize,
    },
    /// Inverse of the 5-point Laplacian on a `mesh_k x mesh_k` grid, by CG.
    InversePoisson {
        #[serde(default = "default_mesh")]
        mesh_k: usize,
    },
}

/// Catalogue entries for `fixtures list`: kind, parameters, description.
pub const FIXTURE_KINDS: &[(&str, &str, &str)] = &[
    ("synthetic_algebraic", "c, n=1000, seed=0", "U diag(1/i^c) U^T"),
    ("synthetic_exponential", "s, n=1000, seed=0", "U diag(exp(-i/s)) U^T"),
    (
        "graph_triangles",
        "path",
        "B^3 of an edge-list graph (tr = 6 x triangles)",
    ),
    ("estrada", "path, iters=30", "exp(B) of an edge-list graph via Lanczos"),
    (
        "logdet_sprandn",
        "n=500, density=0.025, iters=25, seed=0",
        "log(I + sparse low-rank) via Lanczos",
    ),
    (
        "logdet_matrix",
        "path, iters=35",
        "log(B) of an SPD Matrix Market file via Lanczos",
    ),
    ("inverse_tridiag", "n=1000", "tridiag(-1,4,-1)^-1 via Thomas"),
    ("inverse_poisson", "mesh_k=50", "5-point Poisson inverse via CG"),
];

impl FromStr for FixtureSpec {
    type Err = TraceError;

    /// Parses `kind:key=value,key=value`, for example `synthetic_algebraic:c=1,n=1000`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut object = serde_json::Map::new();
        object.insert("kind".into(), serde_json::Value::String(kind.trim().into()));
        for pair in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| TraceError::Config(format!("fixture parameter '{pair}' is not key=value")))?;
            let value = value.trim();
            let json = if let Ok(u) = value.parse::<u64>() {
                serde_json::Value::from(u)
            } else if let Ok(f) = value.parse::<f64>() {
                serde_json::Value::from(f)
            } else {
                serde_json::Value::String(value.into())
            };
            object.insert(key.trim().into(), json);
        }
        serde_json::from_value(serde_json::Value::Object(object))
            .map_err(|e| TraceError::Config(format!("bad fixture '{s}': {e}")))
    }
}

impl fmt::Display for FixtureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let value = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        let object = value.as_object().ok_or(fmt::Error)?;
        let kind = object.get("kind").and_then(|k| k.as_str()).ok_or(fmt::Error)?;
        write!(f, "{kind}")?;
        let mut sep = ':';
        for (key, v) in object.iter().filter(|(k, _)| k.as_str() != "kind") {
            match v {
                serde_json::Value::String(s) => write!(f, "{sep}{key}={s}")?,
                other => write!(f, "{sep}{key}={other}")?,
            }
            sep = ',';
        }
        Ok(())
    }
}

/// A generated operator with its reference trace when one is available.
pub struct Fixture {
    pub id: String,
    pub op: Box<dyn SymmetricOperator>,
    pub truth: Option<f64>,
    /// Whether the operator is known to be positive semidefinite.
    pub psd: bool,
}

impl fmt::Debug for Fixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fixture")
            .field("id", &self.id)
            .field("n", &self.op.dim())
            .field("truth", &self.truth)
            .field("psd", &self.psd)
            .finish()
    }
}

/// `sum_i (B^3)_ii`, counted as the common neighbours of both ends of every directed edge.
pub fn cube_trace(adjacency: &CsrMatrix) -> f64 {
    let neighbours: Vec<Vec<usize>> = (0..adjacency.nrows())
        .map(|i| adjacency.row(i).filter(|&(_, v)| v != 0.0).map(|(j, _)| j).collect())
        .collect();
    let mut total = 0u64;
    for (i, row) in neighbours.iter().enumerate() {
        for &j in row {
            let (a, b) = (row, &neighbours[j]);
            let (mut p, mut q) = (0, 0);
            while p < a.len() && q < b.len() {
                match a[p].cmp(&b[q]) {
                    std::cmp::Ordering::Less => p += 1,
                    std::cmp::Ordering::Greater => q += 1,
                    std::cmp::Ordering::Equal => {
                        total += 1;
                        p += 1;
                        q += 1;
                    }
                }
            }
        }
        debug_assert!(i < neighbours.len());
    }
    total as f64
}

fn dense_spectral_trace(m: &DMatrix<f64>, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    m.clone().symmetric_eigenvalues().iter().map(|&l| f(l)).sum()
}

fn synthetic(eigs: DVector<f64>, seed: u64) -> Result<(Box<dyn SymmetricOperator>, f64)> {
    let n = eigs.len();
    let spectral = SpectralOperator::new(eigs, seed)?;
    let truth = spectral.trace();
    if n > DENSE_LIMIT {
        return Ok((Box::new(spectral), truth));
    }
    let u = spectral.basis();
    let scaled = u * DMatrix::from_diagonal(spectral.eigenvalues());
    Ok((Box::new(DenseOperator::new(scaled * u.transpose())?), truth))
}

/// `I + sum_j w_j x_j x_j^T` with 40 weights `10 / j^2`, 60 weights `1 / j^2` and Gaussian
/// `x_j` whose entries are kept with probability `density`.
pub fn sprandn_operator(n: usize, density: f64, seed: u64) -> Result<LowRankUpdateOperator> {
    let (factors, weights) = sprandn_factors(n, density, seed);
    LowRankUpdateOperator::new(1.0, factors, weights)
}

fn sprandn_factors(n: usize, density: f64, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let terms = 100;
    let weights = DVector::from_fn(terms, |j, _| {
        let j = (j + 1) as f64;
        if j <= 40.0 {
            10.0 / (j * j)
        } else {
            1.0 / (j * j)
        }
    });
    let values = ProbeStream::new(seed, n, ProbeKind::Gaussian).with_domain(domain::SPRANDN);
    let masks = ProbeStream::new(seed, n, ProbeKind::Gaussian).with_domain(domain::SPRANDN_MASK);
    let mut factors = DMatrix::zeros(n, terms);
    for j in 0..terms {
        let v = values.column(j as u64);
        let keep = masks.uniform_column(j as u64);
        for i in 0..n {
            if keep[i] < density {
                factors[(i, j)] = v[i];
            }
        }
    }
    (factors, weights)
}

/// Builds the operator of a fixture and its reference trace.
pub fn generate_fixture(spec: &FixtureSpec) -> Result<Fixture> {
    let id = spec.to_string();
    let check_n = |n: usize| {
        if n < 8 {
            Err(TraceError::Config(format!(
                "fixture dimension must be at least 8, got {n}"
            )))
        } else {
            Ok(())
        }
    };
    let (op, truth, psd): (Box<dyn SymmetricOperator>, Option<f64>, bool) = match spec {
        FixtureSpec::SyntheticAlgebraic { c, n, seed } => {
            check_n(*n)?;
            let eigs = DVector::from_fn(*n, |i, _| ((i + 1) as f64).powf(-c));
            let (op, truth) = synthetic(eigs, *seed)?;
            (op, Some(truth), true)
        }
        FixtureSpec::SyntheticExponential { s, n, seed } => {
            check_n(*n)?;
            if !(*s > 0.0) {
                return Err(TraceError::Config("decay scale s must be positive".into()));
            }
            let eigs = DVector::from_fn(*n, |i, _| (-((i + 1) as f64) / s).exp());
            let (op, truth) = synthetic(eigs, *seed)?;
            (op, Some(truth), true)
        }
        FixtureSpec::GraphTriangles { path } => {
            let adjacency = read_edge_list(path)?;
            let truth = cube_trace(&adjacency);
            let op = PolynomialOperator::new(SparseOperator::new(adjacency)?, 3)?;
            (Box::new(op), Some(truth), false)
        }
        FixtureSpec::Estrada { path, iters } => {
            let adjacency = read_edge_list(path)?;
            let truth = if adjacency.nrows() <= DENSE_LIMIT {
                Some(dense_spectral_trace(&adjacency.to_dense(), |l| Ok(l.exp()))?)
            } else {
                None
            };
            let op = FunctionOperator::new(SparseOperator::new(adjacency)?, MatrixFunction::Exp, *iters)?;
            (Box::new(op), truth, true)
        }
        FixtureSpec::LogdetSprandn {
            n,
            density,
            iters,
            seed,
        } => {
            check_n(*n)?;
            if !(*density > 0.0 && *density <= 1.0) {
                return Err(TraceError::Config("density must lie in (0, 1]".into()));
            }
            let base = sprandn_operator(*n, *density, *seed)?;
            let truth = if *n <= DENSE_LIMIT {
                Some(dense_spectral_trace(&base.to_dense(), |l| MatrixFunction::Log.eval(l))?)
            } else {
                None
            };
            let op = FunctionOperator::new(base, MatrixFunction::Log, *iters)?;
            (Box::new(op), truth, true)
        }
        FixtureSpec::LogdetMatrix { path, iters } => {
            let matrix = read_matrix_market(path)?;
            let base = SparseOperator::new(matrix)?;
            let n = base.dim();
            let truth = if n <= DENSE_LIMIT {
                Some(dense_spectral_trace(&base.matrix().to_dense(), |l| {
                    MatrixFunction::Log.eval(l)
                })?)
            } else {
                None
            };
            let op = FunctionOperator::new(base, MatrixFunction::Log, *iters)?;
            (Box::new(op), truth, false)
        }
        FixtureSpec::InverseTridiag { n } => {
            check_n(*n)?;
            let bands = TridiagonalBands::toeplitz(*n, 4.0, -1.0);
            let h = std::f64::consts::PI / (*n as f64 + 1.0);
            let truth = (1..=*n).map(|k| 1.0 / (4.0 - 2.0 * (k as f64 * h).cos())).sum();
            (Box::new(InverseOperator::tridiagonal(&bands)?), Some(truth), true)
        }
        FixtureSpec::InversePoisson { mesh_k } => {
            if *mesh_k < 2 {
                return Err(TraceError::Config(format!("mesh_k must be at least 2, got {mesh_k}")));
            }
            let k = *mesh_k;
            let h = std::f64::consts::PI / (k as f64 + 1.0);
            let mut truth = 0.0;
            for i in 1..=k {
                for j in 1..=k {
                    truth += 1.0 / (4.0 - 2.0 * (i as f64 * h).cos() - 2.0 * (j as f64 * h).cos());
                }
            }
            let base = SparseOperator::new(crate::linop::poisson_2d(k))?;
            (
                Box::new(InverseOperator::cg(Box::new(base), DEFAULT_CG_TOL)?),
                Some(truth),
                true,
            )
        }
    };
    Ok(Fixture { id, op, truth, psd })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Hutchinson,
    HutchPp,
    Prototype,
    AHutchPp,
    SinglePass,
    NystromPp,
}

impl Estimator {
    pub const ALL: [Estimator; 6] = [
        Estimator::Hutchinson,
        Estimator::HutchPp,
        Estimator::Prototype,
        Estimator::AHutchPp,
        Estimator::SinglePass,
        Estimator::NystromPp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Hutchinson => "hutchinson",
            Estimator::HutchPp => "hutch_pp",
            Estimator::Prototype => "prototype",
            Estimator::AHutchPp => "a_hutch_pp",
            Estimator::SinglePass => "single_pass",
            Estimator::NystromPp => "nystrom_pp",
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, Estimator::Prototype | Estimator::AHutchPp)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '+'], "_");
        let key = match key.as_str() {
            "hutch__" | "hutchpp" => "hutch_pp",
            "a_hutch__" | "ahutchpp" | "ahutch_pp" => "a_hutch_pp",
            "nystrom__" | "nystrompp" => "nystrom_pp",
            other => other,
        };
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == key)
            .ok_or_else(|| TraceError::Config(format!("unknown estimator '{s}'")))
    }
}

/// Parameters for one estimator call beyond the operator itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunParams {
    Budget(usize),
    Adaptive(AdaptiveConfig),
}

/// Runs `estimator` once; fixed-budget estimators take a budget, adaptive ones a config.
pub fn run_estimator(
    op: &dyn SymmetricOperator,
    estimator: Estimator,
    params: RunParams,
    seed: u64,
) -> Result<TraceReport> {
    match (estimator, params) {
        (Estimator::Hutchinson, RunParams::Budget(m)) => hutchinson(op, m, ProbeKind::Gaussian, seed),
        (Estimator::HutchPp, RunParams::Budget(m)) => hutch_pp(op, m, ProbeKind::Gaussian, seed),
        (Estimator::SinglePass, RunParams::Budget(m)) => single_pass_hutch_pp(op, m, SinglePassSplit::default(), seed),
        (Estimator::NystromPp, RunParams::Budget(m)) => nystrom_pp(op, m, seed),
        (Estimator::Prototype, RunParams::Adaptive(cfg)) => prototype_adaptive(op, &cfg.with_seed(seed)),
        (Estimator::AHutchPp, RunParams::Adaptive(cfg)) => a_hutch_pp(op, &cfg.with_seed(seed)),
        (e, RunParams::Budget(_)) => Err(TraceError::Config(format!(
            "{e} is adaptive and takes a tolerance, not a budget"
        ))),
        (e, RunParams::Adaptive(_)) => Err(TraceError::Config(format!(
            "{e} takes a matvec budget, not a tolerance"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    /// Matvec budgets `m` for fixed-budget estimators.
    Budgets(Vec<usize>),
    /// Exponents `p` with tolerance `eps = |tr(A)| / 2^p` for adaptive estimators.
    Precisions(Vec<u32>),
}

impl Sweep {
    fn values(&self) -> Vec<u64> {
        match self {
            Sweep::Budgets(v) => v.iter().map(|&m| m as u64).collect(),
            Sweep::Precisions(v) => v.iter().map(|&p| p as u64).collect(),
        }
    }
}

fn default_repeats() -> usize {
    100
}
fn default_delta() -> f64 {
    0.05
}
fn default_block() -> usize {
    1
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub fixture: FixtureSpec,
    pub estimator: Estimator,
    pub sweep: Sweep,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_block")]
    pub block: usize,
    #[serde(default)]
    pub schedule: BlockSchedule,
    /// For adaptive sweeps: also run Hutch++ with the matvec total of each adaptive run.
    #[serde(default = "default_true")]
    pub paired: bool,
    /// For adaptive sweeps: also run Hutchinson with the same total.
    #[serde(default)]
    pub include_hutchinson: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.repeats < 1 {
            return Err(TraceError::Config("repeats must be at least 1".into()));
        }
        if self.sweep.values().is_empty() {
            return Err(TraceError::Config("sweep must not be empty".into()));
        }
        match (&self.sweep, self.estimator.is_adaptive()) {
            (Sweep::Precisions(_), false) => Err(TraceError::Config(format!(
                "{} takes budgets; precision sweeps need an adaptive estimator",
                self.estimator
            ))),
            (Sweep::Budgets(_), true) => Err(TraceError::Config(format!(
                "{} is adaptive; sweep precisions instead of budgets",
                self.estimator
            ))),
            _ => Ok(()),
        }
    }
}

/// One estimator run inside an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub fixture: String,
    pub estimator: String,
    /// Budget `m` or precision exponent `p`, depending on the sweep.
    pub sweep_value: u64,
    pub trial: usize,
    pub estimate: f64,
    pub truth: Option<f64>,
    pub relative_error: Option<f64>,
    pub matvecs_total: u64,
    pub matvecs_lowrank: u64,
    pub matvecs_hutchinson: u64,
    pub rank_used: usize,
    pub seed: u64,
}

pub const CSV_HEADER: &str = "fixture,estimator,sweep_value,trial,estimate,truth,relative_error,\
matvecs_total,matvecs_lowrank,matvecs_hutchinson,rank_used,seed";

fn csv_float(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl ResultRow {
    fn new(fixture: &Fixture, estimator: Estimator, sweep_value: u64, trial: usize, report: &TraceReport) -> Self {
        Self {
            fixture: fixture.id.clone(),
            estimator: estimator.name().into(),
            sweep_value,
            trial,
            estimate: report.estimate,
            truth: fixture.truth,
            relative_error: fixture.truth.map(|t| (report.estimate - t).abs() / t.abs()),
            matvecs_total: report.matvecs_total,
            matvecs_lowrank: report.matvecs_lowrank,
            matvecs_hutchinson: report.matvecs_hutchinson,
            rank_used: report.rank_used,
            seed: report.seed,
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_text(&self.fixture),
            csv_text(&self.estimator),
            self.sweep_value,
            self.trial,
            csv_float(Some(self.estimate)),
            csv_float(self.truth),
            csv_float(self.relative_error),
            self.matvecs_total,
            self.matvecs_lowrank,
            self.matvecs_hutchinson,
            self.rank_used,
            self.seed
        )
    }
}

pub fn write_csv(rows: &[ResultRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.to_csv())?;
    }
    Ok(())
}

/// Runs an experiment on an already generated fixture. Trials run in parallel with seed
/// `spec.seed + trial`; rows come back in (sweep value, trial, estimator) order.
pub fn run_experiment_on(spec: &ExperimentSpec, fixture: &Fixture) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    if spec.estimator == Estimator::NystromPp && !fixture.psd {
        return Err(TraceError::Config(format!(
            "Nystrom++ needs a positive semidefinite operator; {} is not known to be one",
            fixture.id
        )));
    }
    let truth = match (&spec.sweep, fixture.truth) {
        (Sweep::Precisions(_), None) => {
            return Err(TraceError::Config(format!(
                "precision sweeps need a known trace, and {} has none",
                fixture.id
            )))
        }
        (_, t) => t,
    };
    let op = fixture.op.as_ref();
    let mut jobs = Vec::new();
    for value in spec.sweep.values() {
        for trial in 0..spec.repeats {
            jobs.push((value, trial));
        }
    }
    let run_trial = |&(value, trial): &(u64, usize)| -> Result<Vec<ResultRow>> {
        let seed = spec.seed.wrapping_add(trial as u64);
        match &spec.sweep {
            Sweep::Budgets(_) => {
                let report = run_estimator(op, spec.estimator, RunParams::Budget(value as usize), seed)?;
                Ok(vec![ResultRow::new(fixture, spec.estimator, value, trial, &report)])
            }
            Sweep::Precisions(_) => {
                let tr = truth.expect("checked above");
                let eps = tr.abs() / 2f64.powi(value as i32);
                let cfg = AdaptiveConfig::practical(eps, spec.delta, seed).with_block(spec.block, spec.schedule);
                let mut rows = Vec::with_capacity(3);
                let adaptive = run_estimator(op, spec.estimator, RunParams::Adaptive(cfg), seed)?;
                rows.push(ResultRow::new(fixture, spec.estimator, value, trial, &adaptive));
                let total = adaptive.matvecs_total as usize;
                if spec.paired {
                    let budget = (total - total % 3).max(3);
                    let paired = hutch_pp(op, budget, ProbeKind::Gaussian, seed)?;
                    rows.push(ResultRow::new(fixture, Estimator::HutchPp, value, trial, &paired));
                }
                if spec.include_hutchinson {
                    let plain = hutchinson(op, total.max(1), ProbeKind::Gaussian, seed)?;
                    rows.push(ResultRow::new(fixture, Estimator::Hutchinson, value, trial, &plain));
                }
                Ok(rows)
            }
        }
    };
    let per_trial: Vec<Vec<ResultRow>> = jobs.par_iter().map(run_trial).collect::<Result<_>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

/// Generates the fixture, runs the experiment and writes CSV to `spec.output` when set.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let fixture = generate_fixture(&spec.fixture)?;
    let rows = run_experiment_on(spec, &fixture)?;
    if let Some(path) = &spec.output {
        let io_err = |source| TraceError::Io {
            path: path.clone(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io_err)?;
        write_csv(&rows, std::io::BufWriter::new(file)).map_err(io_err)?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureCell {
    /// Tolerance as a multiple of `|tr(A)|`.
    pub eps_factor: f64,
    pub delta: f64,
    pub failures: usize,
    pub repeats: usize,
    pub mean_matvecs: f64,
}

impl FailureCell {
    pub fn fraction(&self) -> f64 {
        self.failures as f64 / self.repeats as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureTable {
    pub fixture: String,
    pub eps_factors: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Row-major over `eps_factors x deltas`.
    pub cells: Vec<FailureCell>,
}

impl FailureTable {
    pub fn cell(&self, eps_index: usize, delta_index: usize) -> &FailureCell {
        &self.cells[eps_index * self.deltas.len() + delta_index]
    }

    /// One row per tolerance, one column per failure probability.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps_over_trace");
        for d in &self.deltas {
            out.push_str(&format!(",delta={d}"));
        }
        out.push('\n');
        for (i, e) in self.eps_factors.iter().enumerate() {
            out.push_str(&format!("{e}"));
            for j in 0..self.deltas.len() {
                out.push_str(&format!(",{:.16e}", self.cell(i, j).fraction()));
            }
            out.push('\n');
        }
        out
    }
}

/// Fraction of `repeats` A-Hutch++ runs whose error exceeds `eps = f |tr(A)|`, for every
/// tolerance factor `f` and failure probability `delta`. Run `t` of every cell uses seed
/// `seed + t`.
pub fn failure_table(
    fixture: &Fixture,
    eps_factors: &[f64],
    deltas: &[f64],
    repeats: usize,
    seed: u64,
    block: usize,
) -> Result<FailureTable> {
    let truth = fixture
        .truth
        .ok_or_else(|| TraceError::Config(format!("{} has no known trace", fixture.id)))?;
    if repeats < 1 || eps_factors.is_empty() || deltas.is_empty() {
        return Err(TraceError::Config(
            "failure table needs tolerances, deltas and repeats >= 1".into(),
        ));
    }
    if let Some(bad) = eps_factors.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(TraceError::Config(format!(
            "tolerance factor {bad} must be finite and positive"
        )));
    }
    if let Some(bad) = deltas.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
        return Err(TraceError::Config(format!("delta {bad} must lie in (0, 1)")));
    }
    let op = fixture.op.as_ref();
    let mut cells = Vec::with_capacity(eps_factors.len() * deltas.len());
    for &f in eps_factors {
        for &delta in deltas {
            let eps = f * truth.abs();
            let outcomes: Vec<(bool, u64)> = (0..repeats)
                .into_par_iter()
                .map(|t| {
                    let cfg = AdaptiveConfig::practical(eps, delta, seed.wrapping_add(t as u64))
                        .with_block(block, BlockSchedule::Coarse);
                    a_hutch_pp(op, &cfg).map(|r| ((r.estimate - truth).abs() > eps, r.matvecs_total))
                })
                .collect::<Result<_>>()?;
            let failures = outcomes.iter().filter(|o| o.0).count();
            let mean_matvecs = outcomes.iter().map(|o| o.1 as f64).sum::<f64>() / repeats as f64;
            cells.push(FailureCell {
                eps_factor: f,
                delta,
                failures,
                repeats,
                mean_matvecs,
            });
        }
    }
    Ok(FailureTable {
        fixture: fixture.id.clone(),
        eps_factors: eps_factors.to_vec(),
        deltas: deltas.to_vec(),
        cells,
    })
}
