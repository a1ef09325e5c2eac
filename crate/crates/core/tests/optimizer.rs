mod common;

use proptest::prelude::*;
use sfpl::data::CovariateMatrix;
use sfpl::likelihood::CoefficientSet;
use sfpl::optimizer::{fit, fit_from, initial_estimate, mm_step, FitControls};
use sfpl::penalty::{smoothed_objective, surrogate_objective, PenaltyConfig};
use sfpl::Error;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn surrogate_majorizes_smoothed_objective(
        seed in 0u64..10_000,
        ls in 0.0f64..10.0,
        lf in 0.0f64..10.0,
        scale in prop_oneof![Just(1e-7), Just(1e-3), Just(0.5), Just(3.0)],
    ) {
        let inst = common::instance(seed, 3, 8, 2, 10, 3);
        let cfg = PenaltyConfig::new(ls, lf).unwrap();
        let mut r = common::rng(seed ^ 0x11);
        let bh = common::coefficients(&mut r, 3, 2, 1.0);
        let mut b = common::coefficients(&mut r, 3, 2, scale).into_matrix();
        b += bh.matrix();
        let b = CoefficientSet::from_matrix(b).unwrap();
        let q = surrogate_objective(&b, &bh, &inst.data, &inst.x, &cfg).unwrap();
        let f = smoothed_objective(&b, &inst.data, &inst.x, &cfg).unwrap();
        prop_assert!(q >= f - 1e-9, "Q {q} < f {f}");
        let touch = surrogate_objective(&bh, &bh, &inst.data, &inst.x, &cfg).unwrap();
        let fh = smoothed_objective(&bh, &inst.data, &inst.x, &cfg).unwrap();
        prop_assert!((touch - fh).abs() < 1e-9 * fh.abs().max(1.0));
    }

    #[test]
    fn one_step_never_increases_the_objective(
        seed in 0u64..10_000,
        ls in 0.0f64..20.0,
        lf in 0.0f64..20.0,
    ) {
        let inst = common::instance(seed, 2, 8, 3, 15, 3);
        let cfg = PenaltyConfig::new(ls, lf).unwrap();
        let mut r = common::rng(seed ^ 0x22);
        let start = common::coefficients(&mut r, 2, 3, 1.5);
        let before = smoothed_objective(&start, &inst.data, &inst.x, &cfg).unwrap();
        let step = mm_step(&start, &inst.data, &inst.x, &cfg).unwrap();
        prop_assert!(step.objective <= before + 1e-10);
        let after = smoothed_objective(&step.coefficients, &inst.data, &inst.x, &cfg).unwrap();
        prop_assert!((after - step.objective).abs() < 1e-9 * after.abs().max(1.0));
    }

    #[test]
    fn traces_are_monotone(seed in 0u64..10_000, ls in 0.0f64..10.0, lf in 0.0f64..10.0) {
        let inst = common::instance(seed, 3, 8, 2, 25, 3);
        let cfg = PenaltyConfig::new(ls, lf).unwrap();
        let res = fit(&inst.data, &inst.x, &cfg, &FitControls::default()).unwrap();
        for w in res.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10);
        }
        prop_assert_eq!(res.objective_trace.len(), res.iterations + 1);
    }
}

#[test]
fn fits_are_deterministic() {
    let inst = common::instance(5, 3, 10, 3, 30, 3);
    let cfg = PenaltyConfig::new(2.0, 3.0).unwrap();
    let a = fit(&inst.data, &inst.x, &cfg, &FitControls::default()).unwrap();
    let b = fit(&inst.data, &inst.x, &cfg, &FitControls::default()).unwrap();
    assert_eq!(a.coefficients, b.coefficients);
    assert_eq!(a.objective_trace, b.objective_trace);
}

#[test]
fn unpenalized_fit_keeps_the_mle() {
    for seed in 0..5 {
        let inst = common::instance(seed, 2, 10, 3, 60, 4);
        let mle = initial_estimate(&inst.data, &inst.x).unwrap();
        assert!(mle.converged);
        let res = fit(
            &inst.data,
            &inst.x,
            &PenaltyConfig::unpenalized(),
            &FitControls::default(),
        )
        .unwrap();
        assert!(res.coefficients.max_abs_diff(&mle.coefficients) < 1e-8);
    }
}

#[test]
fn strong_penalties_reach_their_limits() {
    let inst = common::instance(3, 3, 10, 3, 40, 3);
    let controls = FitControls::default();
    let sparse = fit(
        &inst.data,
        &inst.x,
        &PenaltyConfig::new(1e6, 0.0).unwrap(),
        &controls,
    )
    .unwrap();
    assert!(sparse.coefficients.max_abs() < 1e-3);
    let fused = fit(
        &inst.data,
        &inst.x,
        &PenaltyConfig::new(0.0, 1e6).unwrap(),
        &controls,
    )
    .unwrap();
    let m = fused.coefficients.matrix();
    for q in 0..3 {
        assert!((m[(0, q)] - m[(1, q)]).abs() < 1e-3);
        assert!((m[(0, q)] - m[(2, q)]).abs() < 1e-3);
    }
}

#[test]
fn warm_start_reaches_the_same_optimum() {
    let inst = common::instance(8, 2, 10, 2, 50, 3);
    let cfg = PenaltyConfig::new(1.0, 1.0).unwrap();
    let controls = FitControls {
        xi: 1e-12,
        ..FitControls::default()
    };
    let cold = fit(&inst.data, &inst.x, &cfg, &controls).unwrap();
    let warm = fit_from(
        &CoefficientSet::zeros(2, 2),
        &inst.data,
        &inst.x,
        &cfg,
        &controls,
    )
    .unwrap();
    assert!(cold.coefficients.max_abs_diff(&warm.coefficients) < 1e-4);
}

#[test]
fn rank_deficient_covariates_are_refused_unless_forced() {
    let inst = common::instance(2, 2, 6, 1, 20, 3);
    let rows = (0..6)
        .map(|j| vec![inst.x.get(j, 0), 2.0 * inst.x.get(j, 0)])
        .collect();
    let x = CovariateMatrix::from_rows(rows, vec!["a".into(), "b".into()]).unwrap();
    let cfg = PenaltyConfig::new(1.0, 1.0).unwrap();
    let err = fit(&inst.data, &x, &cfg, &FitControls::default()).unwrap_err();
    assert!(matches!(err, Error::NotIdentifiable { rank: 1, p: 2 }));
    let forced = FitControls {
        force: true,
        ..FitControls::default()
    };
    assert!(fit(&inst.data, &x, &cfg, &forced).is_ok());
}

#[test]
fn non_positive_xi_is_rejected() {
    let inst = common::instance(1, 2, 6, 1, 10, 3);
    let controls = FitControls {
        xi: 0.0,
        ..FitControls::default()
    };
    assert!(matches!(
        fit(
            &inst.data,
            &inst.x,
            &PenaltyConfig::unpenalized(),
            &controls
        ),
        Err(Error::Config(_))
    ));
}
