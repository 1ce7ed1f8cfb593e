//! Property tests over the public API.

use adatrace::estimators::{
    a_hutch_pp, hutch_pp, hutchinson, nystrom_pp, single_pass_hutch_pp, AdaptiveConfig, SinglePassSplit,
};
use adatrace::harness::{run_experiment_on, write_csv, Estimator, ExperimentSpec, Fixture, FixtureSpec, Sweep};
use adatrace::linop::{DenseOperator, SpectralOperator, SymmetricOperator};
use adatrace::nystrom::nystrom_factor;
use adatrace::rangefinder::{BlockSchedule, RangeState};
use adatrace::sketch::{domain, ProbeKind, ProbeStream};
use adatrace::special::{alpha_k, reg_lower_gamma};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn algebraic_dense(n: usize, c: f64, seed: u64) -> DenseOperator {
    let s = SpectralOperator::algebraic(n, c, seed).unwrap();
    let scaled = s.basis() * DMatrix::from_diagonal(s.eigenvalues());
    DenseOperator::new(scaled * s.basis().transpose()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fixed_budget_accounting(m in 3usize..90, seed in any::<u64>()) {
        let op = algebraic_dense(60, 1.0, 3);
        let before = op.matvecs();
        let r = hutch_pp(&op, m, ProbeKind::Gaussian, seed).unwrap();
        let used = 3 * (m / 3) as u64;
        prop_assert_eq!(op.matvecs() - before, used);
        prop_assert_eq!(r.matvecs_total, used);
        prop_assert_eq!(r.matvecs_lowrank, 2 * used / 3);
        prop_assert_eq!(r.matvecs_hutchinson, used / 3);

        let before = op.matvecs();
        let r = hutchinson(&op, m, ProbeKind::Rademacher, seed).unwrap();
        prop_assert_eq!(op.matvecs() - before, m as u64);
        prop_assert_eq!(r.matvecs_total, m as u64);

        let before = op.matvecs();
        let r = nystrom_pp(&op, m.min(100), seed).unwrap();
        prop_assert_eq!(op.matvecs() - before, r.matvecs_total);
        prop_assert_eq!(r.matvecs_total % 2, 0);
        prop_assert_eq!(r.matvecs_lowrank, r.matvecs_hutchinson);
    }

    #[test]
    fn single_pass_accounting(m in 10usize..120, seed in any::<u64>()) {
        let op = algebraic_dense(80, 2.0, 1);
        let sizes = SinglePassSplit::default().block_sizes(m).unwrap();
        let before = op.matvecs();
        let r = single_pass_hutch_pp(&op, m, SinglePassSplit::default(), seed).unwrap();
        let total: usize = sizes.iter().sum();
        prop_assert!(total <= m);
        prop_assert_eq!(op.matvecs() - before, total as u64);
        prop_assert_eq!(r.matvecs_total, total as u64);
    }

    #[test]
    fn batched_blocks_do_not_change_a_hutch_pp(seed in any::<u64>(), b in 2usize..7, c in 0.5f64..3.0) {
        let op = algebraic_dense(120, c, 9);
        let eps = 0.02 * op.trace();
        let cfg = AdaptiveConfig::practical(eps, 0.05, seed);
        let one = a_hutch_pp(&op, &cfg).unwrap();
        let before = op.matvecs();
        let many = a_hutch_pp(&op, &cfg.with_block(b, BlockSchedule::Batched)).unwrap();
        prop_assert_eq!(one.estimate.to_bits(), many.estimate.to_bits());
        prop_assert_eq!(one.rank_used, many.rank_used);
        prop_assert_eq!(one.samples, many.samples);
        prop_assert_eq!(many.matvecs_total - many.wasted_matvecs, one.matvecs_total);
        prop_assert_eq!(op.matvecs() - before, many.matvecs_total);
    }

    #[test]
    fn range_state_tracks_dense_objective(seed in any::<u64>(), n in 20usize..60, c in 0.3f64..3.0) {
        let op = algebraic_dense(n, c, seed);
        let a = op.matrix().clone();
        let constant = 50.0;
        let mut state = RangeState::new(n, constant);
        let mut stream = ProbeStream::new(seed, n, ProbeKind::Gaussian).with_domain(domain::RANGE);
        for step in 1..=n / 2 {
            state.advance(&op, &stream.draw_block(1)).unwrap();
            prop_assert_eq!(state.rank(), step);
            prop_assert_eq!(state.matvecs_used(), 2 * step as u64);
            let q = state.basis();
            let aq = &a * q;
            let direct = 2.0 * step as f64 + constant * ((q.transpose() * &aq).norm_squared() - 2.0 * aq.norm_squared());
            let tracked = state.history().last().unwrap().1;
            prop_assert!((tracked - direct).abs() <= 1e-9 * direct.abs().max(1.0), "{} vs {}", tracked, direct);
        }
    }

    #[test]
    fn nystrom_eigenvalues_are_nonnegative_and_underestimate(seed in any::<u64>(), k in 1usize..30, c in 0.2f64..4.0) {
        let op = algebraic_dense(60, c, seed);
        let omega = ProbeStream::new(seed ^ 1, 60, ProbeKind::Gaussian).draw_block(k);
        let before = op.matvecs();
        let f = nystrom_factor(&op, &omega).unwrap();
        prop_assert_eq!(op.matvecs() - before, k as u64);
        prop_assert!(f.lambda.iter().all(|&l| l >= 0.0));
        prop_assert!(f.trace() <= op.trace() * (1.0 + 1e-8));
    }

    #[test]
    fn alpha_hits_delta_when_unclamped(k in 1usize..400, delta in 0.001f64..0.5) {
        let a = alpha_k(k, delta).unwrap();
        prop_assume!(!a.clamped);
        let p = reg_lower_gamma(k as f64 / 2.0, a.value * k as f64 / 2.0).unwrap();
        prop_assert!((p - delta).abs() <= 1e-10, "P = {} for delta {}", p, delta);
        prop_assert!(alpha_k(k + 1, delta).unwrap().value >= a.value);
    }

    #[test]
    fn incomplete_gamma_is_a_distribution(s in 0.1f64..60.0, x in 0.0f64..200.0, dx in 0.0f64..5.0) {
        let p = reg_lower_gamma(s, x).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(reg_lower_gamma(s, x + dx).unwrap() >= p);
    }

    #[test]
    fn rademacher_hutchinson_is_exact_on_diagonals(m in 1usize..20, seed in any::<u64>(), d in prop::collection::vec(-5.0f64..5.0, 2..30)) {
        let n = d.len();
        let op = DenseOperator::new(DMatrix::from_diagonal(&DVector::from_vec(d.clone()))).unwrap();
        let r = hutchinson(&op, m, ProbeKind::Rademacher, seed).unwrap();
        let tr: f64 = d.iter().sum();
        prop_assert!((r.estimate - tr).abs() <= 1e-12 * (1.0 + d.iter().map(|v| v.abs()).sum::<f64>()), "n={}", n);
    }

    #[test]
    fn fixture_strings_round_trip(c in 0.1f64..5.0, n in 8usize..5000, seed in any::<u32>()) {
        let spec = FixtureSpec::SyntheticAlgebraic { c, n, seed: seed as u64 };
        let parsed: FixtureSpec = spec.to_string().parse().unwrap();
        prop_assert_eq!(parsed, spec);
    }
}

fn small_fixture() -> Fixture {
    let op = algebraic_dense(80, 2.0, 5);
    let truth = op.trace();
    Fixture {
        id: "dense".into(),
        op: Box::new(op),
        truth: Some(truth),
        psd: true,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn experiments_are_byte_identical_and_paired(seed in any::<u32>(), p in 1u32..6) {
        let fixture = small_fixture();
        let spec = ExperimentSpec {
            fixture: FixtureSpec::InverseTridiag { n: 80 },
            estimator: Estimator::AHutchPp,
            sweep: Sweep::Precisions(vec![p]),
            repeats: 3,
            seed: seed as u64,
            delta: 0.05,
            block: 1,
            schedule: BlockSchedule::Coarse,
            paired: true,
            include_hutchinson: true,
            output: None,
        };
        let rows = run_experiment_on(&spec, &fixture).unwrap();
        prop_assert_eq!(rows.len(), 9);
        for trial in rows.chunks(3) {
            let total = trial[0].matvecs_total;
            prop_assert_eq!(trial[1].matvecs_total, (total - total % 3).max(3));
            prop_assert_eq!(trial[2].matvecs_total, total);
        }
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_csv(&rows, &mut a).unwrap();
        write_csv(&run_experiment_on(&spec, &fixture).unwrap(), &mut b).unwrap();
        prop_assert_eq!(a, b);
    }
}
