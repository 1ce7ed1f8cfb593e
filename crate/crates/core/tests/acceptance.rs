//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p adatrace --test acceptance`. Pass criterion numbers to run a
//! subset, e.g. `cargo test -p adatrace --test acceptance -- 1 9 12`.

use std::io::Write as _;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use adatrace::estimators::{
    a_hutch_pp, hutch_pp, hutchinson, nystrom_pp, prototype_adaptive, single_pass_hutch_pp, AdaptiveConfig,
    SinglePassSplit, TraceReport,
};
use adatrace::harness::{failure_table, generate_fixture, sprandn_operator, FixtureSpec};
use adatrace::lanczos::{lanczos_fx, MatrixFunction};
use adatrace::linop::{densify, DenseOperator, SpectralOperator, SymmetricOperator};
use adatrace::nystrom::nystrom_factor;
use adatrace::rangefinder::{find_range, BlockSchedule, RangeState};
use adatrace::sketch::{domain, ProbeKind, ProbeStream};
use adatrace::special::{alpha_k, hanson_wright_c, reg_lower_gamma, sample_constant, TailConstants};
use nalgebra::{DMatrix, DVector};

type Check = std::result::Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Check,
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn dense_fixture(eigs: DVector<f64>, seed: u64) -> DenseOperator {
    let s = SpectralOperator::new(eigs, seed).unwrap();
    let scaled = s.basis() * DMatrix::from_diagonal(s.eigenvalues());
    DenseOperator::new(scaled * s.basis().transpose()).unwrap()
}

fn matrix_function(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(f)) * eig.eigenvectors.transpose()
}

// 1
const EXACT_TOL: f64 = 1e-8;

fn exact_recovery() -> Check {
    let spectra = [
        DVector::from_fn(200, |i, _| if i < 5 { (5 - i) as f64 } else { 0.0 }),
        DVector::from_fn(200, |i, _| if i < 5 { 10f64.powi(-(i as i32) / 2) } else { 0.0 }),
    ];
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for (f, eigs) in spectra.into_iter().enumerate() {
        let tr = eigs.sum();
        for seed in 0..3u64 {
            let op = SpectralOperator::new(eigs.clone(), 100 + seed).unwrap();
            let cfg = AdaptiveConfig::practical(1e-6 * tr, 0.05, seed);
            let runs: [(&str, TraceReport); 5] = [
                ("hutch_pp", hutch_pp(&op, 18, ProbeKind::Gaussian, seed).unwrap()),
                ("a_hutch_pp", a_hutch_pp(&op, &cfg).unwrap()),
                ("prototype", prototype_adaptive(&op, &cfg).unwrap()),
                (
                    "single_pass",
                    single_pass_hutch_pp(&op, 18, SinglePassSplit::default(), seed).unwrap(),
                ),
                ("nystrom_pp", nystrom_pp(&op, 12, seed).unwrap()),
            ];
            for (name, report) in runs {
                let err = rel(report.estimate, tr);
                worst = worst.max(err);
                if err.is_nan() || err > EXACT_TOL {
                    failures.push(format!("{name} fixture {f} seed {seed}: {err:.2e}"));
                }
            }
        }
    }
    ensure(
        failures.is_empty(),
        format!(
            "worst relative error {worst:.2e} (tol {EXACT_TOL:e}) {}",
            failures.join("; ")
        ),
    )
}

// 2
const VARIANCE_BAND: f64 = 0.10;
const VARIANCE_SAMPLES: u64 = 10_000;

fn hutchinson_variance() -> Check {
    let n = 100;
    let g = ProbeStream::new(2024, n, ProbeKind::Gaussian).draw_block(n);
    let candidates = [
        (
            "symmetric gaussian",
            DenseOperator::new((&g + g.transpose()) * 0.5).unwrap(),
        ),
        (
            "algebraic c=1",
            dense_fixture(DVector::from_fn(n, |i, _| 1.0 / (i + 1) as f64), 7),
        ),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, op) in candidates {
        let target = 2.0 * op.matrix().norm_squared();
        let samples: Vec<f64> = (0..VARIANCE_SAMPLES)
            .map(|s| hutchinson(&op, 1, ProbeKind::Gaussian, s).unwrap().estimate)
            .collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
        let ratio = var / target;
        ok &= (ratio - 1.0).abs() <= VARIANCE_BAND;
        lines.push(format!("{name}: var/(2|A|_F^2) = {ratio:.4}"));
    }
    ensure(ok, format!("{} (band +-{VARIANCE_BAND})", lines.join(", ")))
}

// 3
const MTILDE_TOL: f64 = 1e-8;

fn mtilde_equivalence() -> Check {
    let mut worst = 0.0f64;
    let mut mismatches = Vec::new();
    for inst in 0..20u64 {
        let n = 100 + 10 * (inst as usize % 21);
        let eigs = match inst % 4 {
            0 => DVector::from_fn(n, |i, _| ((i + 1) as f64).powf(-(0.5 + inst as f64 / 10.0))),
            1 => DVector::from_fn(n, |i, _| (-((i + 1) as f64) / (5.0 + inst as f64)).exp()),
            2 => DVector::from_fn(n, |i, _| {
                ((i + 1) as f64).powi(-2) * if i % 3 == 0 { -1.0 } else { 1.0 }
            }),
            _ => DVector::from_fn(n, |i, _| 1.0 / (1.0 + i as f64).sqrt()),
        };
        let op = dense_fixture(eigs.clone(), inst);
        let a = op.matrix().clone();
        let tc = TailConstants::new(0.05 * eigs.sum().abs(), 0.05, 0.0).unwrap();
        let c = sample_constant(&tc);

        let steps = 30.min(n / 2);
        let mut state = RangeState::new(n, c);
        let mut stream = ProbeStream::new(inst, n, ProbeKind::Gaussian).with_domain(domain::RANGE);
        for _ in 0..steps {
            state.advance(&op, &stream.draw_block(1)).unwrap();
        }
        let q_all = state.basis().clone();
        let mut dense_m = Vec::new();
        for &(r, tracked) in state.history() {
            let q = q_all.columns(0, r).into_owned();
            let aq = &a * &q;
            let qaq = q.transpose() * &aq;
            let direct = 2.0 * r as f64 + c * (qaq.norm_squared() - 2.0 * aq.norm_squared());
            worst = worst.max(rel(tracked, direct));
            let p = DMatrix::identity(n, n) - &q * q.transpose();
            dense_m.push(2.0 * r as f64 + c * (&p * &a * &p).norm_squared());
        }
        let first_argmin = |v: &[f64]| {
            v.iter()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |best, (i, &x)| if x < best.1 { (i, x) } else { best },
                )
                .0
        };
        let tracked: Vec<f64> = state.history().iter().map(|h| h.1).collect();
        let (rt, rd) = (first_argmin(&tracked), first_argmin(&dense_m));
        if rt != rd {
            mismatches.push(format!(
                "instance {inst}: tracked r* {} vs dense {}",
                state.history()[rt].0,
                state.history()[rd].0
            ));
        }

        // the stopping finder sees the same history prefix
        let mut stream = ProbeStream::new(inst, n, ProbeKind::Gaussian).with_domain(domain::RANGE);
        let found = find_range(&op, &mut stream, c, 1, BlockSchedule::Coarse).unwrap();
        let len = found.state.history().len().min(dense_m.len());
        let expect = state.history()[first_argmin(&dense_m[..len])].0;
        if found.state.detected_minimum() != Some(expect) {
            mismatches.push(format!(
                "instance {inst}: finder r* {:?} vs dense {expect}",
                found.state.detected_minimum()
            ));
        }
    }
    ensure(
        worst <= MTILDE_TOL && mismatches.is_empty(),
        format!(
            "worst relative m~ gap {worst:.2e} (tol {MTILDE_TOL:e}), argmin mismatches {} {}",
            mismatches.len(),
            mismatches.join("; ")
        ),
    )
}

// 4
const FIG1_TARGET: usize = 7;
const FIG1_SLACK: usize = 1;

fn fig1_modal_rank() -> Check {
    let fx = generate_fixture(&FixtureSpec::SyntheticAlgebraic {
        c: 2.0,
        n: 1000,
        seed: 0,
    })
    .unwrap();
    let tr = fx.truth.unwrap();
    let c = sample_constant(&TailConstants::new(0.05 * tr, 0.01, 0.0).unwrap());
    let mut counts = vec![0usize; 501];
    let mut stop_counts = vec![0usize; 501];
    for seed in 0..100u64 {
        let mut stream = ProbeStream::new(seed, 1000, ProbeKind::Gaussian).with_domain(domain::RANGE);
        let out = find_range(fx.op.as_ref(), &mut stream, c, 1, BlockSchedule::Coarse).unwrap();
        counts[out.state.detected_minimum().unwrap_or(0)] += 1;
        stop_counts[out.state.rank()] += 1;
    }
    let mode = |v: &[usize]| (0..v.len()).max_by_key(|&i| (v[i], std::cmp::Reverse(i))).unwrap();
    let modal = mode(&counts);
    ensure(
        modal.abs_diff(FIG1_TARGET) <= FIG1_SLACK,
        format!(
            "modal detected minimum r* = {modal} ({} of 100 seeds), modal rank at stop = {} (target {FIG1_TARGET} +- {FIG1_SLACK})",
            counts[modal],
            mode(&stop_counts)
        ),
    )
}

// 5
const TABLE1_REPEATS: usize = 1000;
const TABLE1_DELTA: f64 = 0.05;

fn table1_failures() -> Check {
    let mut cells = Vec::new();
    let mut ok = true;
    for c in [0.1, 1.0, 3.0] {
        let fx = generate_fixture(&FixtureSpec::SyntheticAlgebraic { c, n: 1000, seed: 0 }).unwrap();
        let table = failure_table(&fx, &[0.01, 0.1], &[TABLE1_DELTA], TABLE1_REPEATS, 0, 1).unwrap();
        for cell in &table.cells {
            ok &= cell.fraction() <= TABLE1_DELTA;
            cells.push(format!("c={c} eps={}tr: {:.4}", cell.eps_factor, cell.fraction()));
        }
    }
    ensure(
        ok,
        format!("failure fractions {} (bound {TABLE1_DELTA})", cells.join(", ")),
    )
}

// 6
const TABLE2_LOWRANK_MAX: f64 = 0.15;
const TABLE2_HUTCH_MAX: f64 = 0.4;

fn table2_split() -> Check {
    let share = |c: f64| -> (f64, f64) {
        let fx = generate_fixture(&FixtureSpec::SyntheticAlgebraic { c, n: 1000, seed: 0 }).unwrap();
        let eps = fx.truth.unwrap() / 2f64.powi(7);
        let (mut low, mut hut, mut tot) = (0u64, 0u64, 0u64);
        for seed in 0..100u64 {
            let r = a_hutch_pp(fx.op.as_ref(), &AdaptiveConfig::practical(eps, 0.05, seed)).unwrap();
            low += r.matvecs_lowrank;
            hut += r.matvecs_hutchinson;
            tot += r.matvecs_total;
        }
        (low as f64 / tot as f64, hut as f64 / tot as f64)
    };
    let (low01, _) = share(0.1);
    let (_, hut3) = share(3.0);
    ensure(
        low01 <= TABLE2_LOWRANK_MAX && hut3 <= TABLE2_HUTCH_MAX,
        format!(
            "c=0.1 low-rank share {low01:.3} (max {TABLE2_LOWRANK_MAX}), c=3 Hutchinson share {hut3:.3} (max {TABLE2_HUTCH_MAX})"
        ),
    )
}

// 7
const NYSTROM_CONSTANT: f64 = 542.0;

fn nystrom_bound() -> Check {
    let n = 300;
    let fixtures = [
        dense_fixture(DVector::from_fn(n, |i, _| 1.0 / (i + 1) as f64), 11),
        dense_fixture(DVector::from_fn(n, |i, _| (-((i + 1) as f64) / 10.0).exp()), 12),
    ];
    let mut violations = 0;
    let mut worst_ratio = 0.0f64;
    let mut trials = 0;
    for op in &fixtures {
        let a = op.matrix();
        let tr = a.trace();
        for k in [5usize, 10, 20] {
            let bound = NYSTROM_CONSTANT / (k as f64).sqrt() * tr;
            for t in 0..200u64 {
                let omega = ProbeStream::new(t, n, ProbeKind::Gaussian).draw_block(2 * k);
                let f = nystrom_factor(op, &omega).unwrap();
                let err = (a - f.to_dense()).norm();
                worst_ratio = worst_ratio.max(err / bound);
                violations += usize::from(err > bound);
                trials += 1;
            }
        }
    }
    ensure(
        violations == 0,
        format!("{violations} violations in {trials} trials, largest error/bound {worst_ratio:.2e}"),
    )
}

// 8
fn estimator_ordering() -> Check {
    let fx = generate_fixture(&FixtureSpec::SyntheticExponential {
        s: 10.0,
        n: 1000,
        seed: 0,
    })
    .unwrap();
    let tr = fx.truth.unwrap();
    let op = fx.op.as_ref();
    let (mut nys, mut hpp, mut sp) = (0.0, 0.0, 0.0);
    for seed in 0..100u64 {
        nys += rel(nystrom_pp(op, 108, seed).unwrap().estimate, tr);
        hpp += rel(hutch_pp(op, 108, ProbeKind::Gaussian, seed).unwrap().estimate, tr);
        sp += rel(
            single_pass_hutch_pp(op, 108, SinglePassSplit::default(), seed)
                .unwrap()
                .estimate,
            tr,
        );
    }
    let (nys, hpp, sp) = (nys / 100.0, hpp / 100.0, sp / 100.0);
    ensure(
        nys <= hpp && hpp < sp,
        format!("mean relative error Nystrom++ {nys:.3e}, Hutch++ {hpp:.3e}, Single-Pass {sp:.3e}"),
    )
}

// 9
const ALPHA_TOL: f64 = 1e-10;
const GAMMA_TOL: f64 = 1e-10;
const HW_TOL: f64 = 1e-12;

fn special_functions() -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    for delta in [0.01, 0.05, 0.1] {
        let got = alpha_k(2, delta).unwrap().value;
        let err = (got - (-(1.0 - delta).ln())).abs();
        ok &= err <= ALPHA_TOL;
        notes.push(format!("alpha_2({delta}) err {err:.1e}"));
    }
    for delta in [0.01, 0.05, 0.1] {
        let values: Vec<f64> = (1..=200).map(|k| alpha_k(k, delta).unwrap().value).collect();
        let monotone = values.windows(2).all(|w| w[1] >= w[0]);
        ok &= monotone;
        if !monotone {
            notes.push(format!("alpha_k not monotone for delta {delta}"));
        }
    }
    let p11 = (reg_lower_gamma(1.0, 1.0).unwrap() - (1.0 - (-1.0f64).exp())).abs();
    let p051 = (reg_lower_gamma(0.5, 1.0).unwrap() - statrs::function::erf::erf(1.0)).abs();
    let hw = (hanson_wright_c(0.25).unwrap() - (-4.0 + 8.0 * 2f64.ln())).abs();
    ok &= p11 <= GAMMA_TOL && p051 <= GAMMA_TOL && hw <= HW_TOL;
    notes.push(format!(
        "P(1,1) err {p11:.1e}, P(0.5,1) err {p051:.1e}, C(0.25) err {hw:.1e}, alpha_k monotone k<=200"
    ));
    ensure(ok, notes.join(", "))
}

// 10
const LANCZOS_TOL: f64 = 1e-10;

fn lanczos_oracle() -> Check {
    let n = 50;
    let spread = |seed: u64| {
        let q = ProbeStream::new(seed, n, ProbeKind::Gaussian).draw_block(n).qr().q();
        let eigs = DVector::from_fn(n, |i, _| 0.5 + 4.0 * i as f64 / (n - 1) as f64);
        &q * DMatrix::from_diagonal(&eigs) * q.transpose()
    };
    let mut cases: Vec<(String, DMatrix<f64>, MatrixFunction, usize)> = Vec::new();
    for seed in 0..3u64 {
        cases.push((format!("exp spread[{seed}]"), spread(seed), MatrixFunction::Exp, 30));
        cases.push((
            format!("log sprandn[{seed}]"),
            sprandn_operator(n, 0.1, seed).unwrap().to_dense(),
            MatrixFunction::Log,
            25,
        ));
        cases.push((
            format!("log spread[{seed}]"),
            spread(seed + 10),
            MatrixFunction::Log,
            35,
        ));
    }
    let mut worst = Vec::new();
    let mut ok = true;
    for (name, b, f, iters) in cases {
        let op = DenseOperator::new(b.clone()).unwrap();
        let fb = matrix_function(&b, |x| f.eval(x).unwrap());
        let mut err = 0.0f64;
        for s in 0..5u64 {
            let x = ProbeStream::new(s, n, ProbeKind::Gaussian).column(0);
            let exact = &fb * &x;
            let got = lanczos_fx(&op, f, &x, iters).unwrap();
            err = err.max((got - &exact).amax() / exact.amax());
        }
        ok &= err <= LANCZOS_TOL;
        worst.push(format!("{name}@{iters} {err:.1e}"));
    }
    ensure(
        ok,
        format!("max relative error {} (tol {LANCZOS_TOL:e})", worst.join(", ")),
    )
}

// 11
const TRIANGLE_REL_TOL: f64 = 0.05;

fn triangle_counting() -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    for g in 0..10u64 {
        let n = 12 + 2 * g as usize;
        let coin = ProbeStream::new(g, n * n, ProbeKind::Gaussian).uniform_column(0);
        let mut adj = vec![vec![false; n]; n];
        let mut file = tempfile::NamedTempFile::new().unwrap();
        for i in 0..n {
            for j in i + 1..n {
                if coin[i * n + j] < 0.3 {
                    adj[i][j] = true;
                    adj[j][i] = true;
                    writeln!(file, "{i} {j}").unwrap();
                }
            }
        }
        // isolated top node would be dropped from the edge list
        writeln!(file, "0 {}", n - 1).unwrap();
        adj[0][n - 1] = true;
        adj[n - 1][0] = true;
        file.flush().unwrap();
        let mut brute = 0u64;
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    brute += u64::from(adj[i][j] && adj[j][k] && adj[i][k]);
                }
            }
        }
        let fx = generate_fixture(&FixtureSpec::GraphTriangles {
            path: file.path().to_path_buf(),
        })
        .unwrap();
        let dense_tr = densify(fx.op.as_ref()).unwrap().trace();
        let truth = fx.truth.unwrap();
        let exact = (dense_tr / 6.0 - brute as f64).abs() < 1e-9 && truth == 6.0 * brute as f64;
        let est = hutch_pp(fx.op.as_ref(), 3 * n, ProbeKind::Gaussian, g)
            .unwrap()
            .estimate;
        let err = if truth == 0.0 { est.abs() } else { rel(est, truth) };
        ok &= exact && err < TRIANGLE_REL_TOL;
        notes.push(format!(
            "n={n}: {brute} triangles, Hutch++ err {err:.1e}{}",
            if exact { "" } else { " MISMATCH" }
        ));
    }
    ensure(ok, notes.join("; "))
}

// 12
fn accounting() -> Check {
    let fx = generate_fixture(&FixtureSpec::SyntheticAlgebraic {
        c: 1.0,
        n: 300,
        seed: 4,
    })
    .unwrap();
    let op = fx.op.as_ref();
    let tr = fx.truth.unwrap();
    let mut problems = Vec::new();
    let counted = |name: &str, before: u64, report: &TraceReport, expected: u64| {
        let mut out = Vec::new();
        let used = op.matvecs() - before;
        if used != expected || report.matvecs_total != expected {
            out.push(format!(
                "{name}: counter {used}, reported {}, formula {expected}",
                report.matvecs_total
            ));
        }
        if report.matvecs_lowrank + report.matvecs_hutchinson != report.matvecs_total {
            out.push(format!("{name}: split does not add up"));
        }
        out
    };
    for m in [1usize, 7, 40] {
        let b = op.matvecs();
        let r = hutchinson(op, m, ProbeKind::Gaussian, 1).unwrap();
        problems.extend(counted("hutchinson", b, &r, m as u64));
    }
    for m in [3usize, 30, 99] {
        let b = op.matvecs();
        let r = hutch_pp(op, m, ProbeKind::Gaussian, 1).unwrap();
        problems.extend(counted("hutch_pp", b, &r, m as u64));
        if r.matvecs_lowrank != 2 * m as u64 / 3 || r.matvecs_hutchinson != m as u64 / 3 {
            problems.push(format!("hutch_pp split at m={m}"));
        }
    }
    for m in [18usize, 60, 100] {
        let b = op.matvecs();
        let r = single_pass_hutch_pp(op, m, SinglePassSplit::default(), 1).unwrap();
        let s: usize = SinglePassSplit::default().block_sizes(m).unwrap().iter().sum();
        problems.extend(counted("single_pass", b, &r, s as u64));
    }
    for m in [12usize, 50] {
        let b = op.matvecs();
        let r = nystrom_pp(op, m, 1).unwrap();
        problems.extend(counted("nystrom_pp", b, &r, m as u64));
    }
    let cfg = AdaptiveConfig::practical(0.01 * tr, 0.05, 3);
    let b = op.matvecs();
    let r = a_hutch_pp(op, &cfg).unwrap();
    problems.extend(counted("a_hutch_pp", b, &r, 2 * r.rank_used as u64 + r.samples as u64));
    let b = op.matvecs();
    let r = prototype_adaptive(op, &cfg).unwrap();
    let k = adatrace::special::default_frobenius_probes(0.05);
    problems.extend(counted("prototype", b, &r, (2 * r.rank_used + k + r.samples) as u64));

    let tri = generate_fixture(&FixtureSpec::InverseTridiag { n: 200 }).unwrap();
    let b = tri.op.base_matvecs();
    let r = hutch_pp(tri.op.as_ref(), 30, ProbeKind::Gaussian, 0).unwrap();
    if r.base_matvecs != tri.op.base_matvecs() - b {
        problems.push("base matvecs".into());
    }

    let one = a_hutch_pp(op, &cfg).unwrap();
    let three = a_hutch_pp(op, &cfg.with_block(3, BlockSchedule::Batched)).unwrap();
    let identical = one.estimate.to_bits() == three.estimate.to_bits()
        && one.rank_used == three.rank_used
        && one.samples == three.samples
        && three.matvecs_total - three.wasted_matvecs == one.matvecs_total;
    if !identical {
        problems.push(format!(
            "b=3 batched differs: {:e} vs {:e}, rank {} vs {}",
            one.estimate, three.estimate, one.rank_used, three.rank_used
        ));
    }
    let again = a_hutch_pp(op, &cfg).unwrap();
    if again != one {
        problems.push("rerun is not identical".into());
    }
    ensure(
        problems.is_empty(),
        format!(
            "counters match formulas for 6 estimators; A-Hutch++ b=1 vs b=3 estimate bits {:016x}/{:016x} {}",
            one.estimate.to_bits(),
            three.estimate.to_bits(),
            problems.join("; ")
        ),
    )
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "exact recovery on rank-5 fixtures",
            limit: secs(1),
            run: exact_recovery,
        },
        Criterion {
            id: 2,
            name: "Hutchinson variance 2|A|_F^2",
            limit: secs(5),
            run: hutchinson_variance,
        },
        Criterion {
            id: 3,
            name: "m~ recursion and argmin vs dense m",
            limit: secs(10),
            run: mtilde_equivalence,
        },
        Criterion {
            id: 4,
            name: "Fig. 1 modal minimum (1/i^2, n=1000)",
            limit: secs(30),
            run: fig1_modal_rank,
        },
        Criterion {
            id: 5,
            name: "Table 1 failure fractions <= delta",
            limit: secs(600),
            run: table1_failures,
        },
        Criterion {
            id: 6,
            name: "Table 2 matvec split",
            limit: secs(120),
            run: table2_split,
        },
        Criterion {
            id: 7,
            name: "Nystrom Frobenius bound",
            limit: secs(60),
            run: nystrom_bound,
        },
        Criterion {
            id: 8,
            name: "estimator ordering at m=108",
            limit: secs(60),
            run: estimator_ordering,
        },
        Criterion {
            id: 9,
            name: "special-function oracles",
            limit: secs(1),
            run: special_functions,
        },
        Criterion {
            id: 10,
            name: "Lanczos exp/log vs dense",
            limit: secs(1),
            run: lanczos_oracle,
        },
        Criterion {
            id: 11,
            name: "triangle counting end to end",
            limit: secs(5),
            run: triangle_counting,
        },
        Criterion {
            id: 12,
            name: "matvec accounting and block invariance",
            limit: secs(60),
            run: accounting,
        },
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| selected.is_empty() || selected.contains(&c.id))
    {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if elapsed <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; exceeded time limit {:?}", c.limit)),
            Err(d) => (false, d),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {} [{:.2}s] {}: {}",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            c.name,
            detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
