mod common;

use proptest::prelude::*;
use sfpl::likelihood::CoefficientSet;
use sfpl::optimizer::fit;
use sfpl::penalty::PenaltyConfig;
use sfpl::selection::{
    build_grid, distinct_df, effective_df, grid_axis, max_fusion_gap, select, Criterion,
    PenaltyGrid, SelectionOptions, GRID_SPAN,
};
use sfpl::simulation::{generate_dataset, replicate_rng, SimulationConfig};

fn small_options() -> SelectionOptions {
    SelectionOptions {
        n_s: 5,
        n_f: 5,
        ..SelectionOptions::default()
    }
}

proptest! {
    #[test]
    fn grid_axis_shape(lambda_max in 1e-3f64..1e6, n in 1usize..15) {
        let axis = grid_axis(lambda_max, n);
        prop_assert_eq!(axis[0], 0.0);
        prop_assert_eq!(axis.len(), n);
        prop_assert!(axis.windows(2).all(|w| w[1] > w[0]));
        if n > 1 {
            prop_assert_eq!(*axis.last().unwrap(), lambda_max);
        }
        if n > 2 {
            prop_assert!((axis[1] * GRID_SPAN / lambda_max - 1.0).abs() < 1e-9);
            let ratios: Vec<f64> = axis[1..].windows(2).map(|w| w[1] / w[0]).collect();
            for r in &ratios {
                prop_assert!((r / ratios[0] - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn distinct_df_never_exceeds_nonzero_count(
        rows in proptest::collection::vec(proptest::collection::vec(prop_oneof![Just(0.0), Just(0.5), -1.0f64..1.0], 3), 1..5),
    ) {
        let b = CoefficientSet::from_rows(&rows).unwrap();
        let d = distinct_df(&b, 1e-4, 1e-4);
        prop_assert!(d <= effective_df(&b, 1e-4));
        let nonzero_vars = (0..3).filter(|&q| rows.iter().any(|r| r[q].abs() >= 1e-4)).count();
        prop_assert!(d >= nonzero_vars);
    }
}

#[test]
fn grid_rejects_bad_axes() {
    assert!(PenaltyGrid::new(vec![1.0], vec![0.0]).is_err());
    assert!(PenaltyGrid::new(vec![0.0, 2.0, 1.0], vec![0.0]).is_err());
    assert!(PenaltyGrid::new(vec![0.0, f64::INFINITY], vec![0.0]).is_err());
    assert_eq!(
        PenaltyGrid::new(vec![0.0, 1.0], vec![0.0, 3.0])
            .unwrap()
            .len(),
        4
    );
}

#[test]
fn grid_endpoints_do_what_they_claim() {
    let inst = common::instance(4, 3, 10, 3, 40, 3);
    let opts = small_options();
    let built = build_grid(&inst.data, &inst.x, &opts).unwrap();
    let at = |ls, lf| {
        let cfg = opts.base.with_lambdas(ls, lf).unwrap();
        fit(&inst.data, &inst.x, &cfg, &opts.controls)
            .unwrap()
            .coefficients
    };
    assert!(at(built.lambda_s_max, 0.0).max_abs() < opts.zero_threshold);
    assert!(max_fusion_gap(&at(0.0, built.lambda_f_max)) < opts.fusion_threshold);
    assert!(at(built.lambda_s_max / 2.0, 0.0).max_abs() >= opts.zero_threshold);
}

#[test]
fn single_cell_grid_equals_plain_fit() {
    let inst = common::instance(6, 2, 10, 2, 40, 3);
    let opts = small_options();
    let res = select(
        &inst.data,
        &inst.x,
        &PenaltyGrid::unpenalized(),
        Criterion::Aic,
        &opts,
    )
    .unwrap();
    let direct = fit(
        &inst.data,
        &inst.x,
        &PenaltyConfig::unpenalized(),
        &opts.controls,
    )
    .unwrap();
    assert_eq!(res.cells.len(), 1);
    assert_eq!(res.chosen_fit().coefficients, direct.coefficients);
}

fn simulated(seed: u64) -> sfpl::simulation::SimulatedData {
    let cfg = SimulationConfig::preset("table1-n50-p5").unwrap();
    generate_dataset(&cfg, &mut replicate_rng(seed, 0, 0)).unwrap()
}

#[test]
fn shrinkage_path_changes_df() {
    let sim = simulated(3);
    let opts = small_options();
    let grid = build_grid(&sim.dataset, &sim.covariates, &opts)
        .unwrap()
        .grid;
    let res = select(&sim.dataset, &sim.covariates, &grid, Criterion::Bic, &opts).unwrap();
    let mut dfs: Vec<usize> = res
        .cells
        .iter()
        .filter(|c| c.lambda_f == 0.0)
        .map(|c| c.scores.unwrap().df)
        .collect();
    dfs.dedup();
    assert!(dfs.len() >= 2, "df along the λ_s axis: {dfs:?}");
}

/// BIC charges log(N) > 2 per parameter, so on a shared grid the BIC choice
/// can never carry more degrees of freedom than the AIC choice.
#[test]
fn bic_never_picks_more_df_than_aic() {
    let opts = small_options();
    for seed in 1..=4 {
        let sim = simulated(seed);
        let grid = build_grid(&sim.dataset, &sim.covariates, &opts)
            .unwrap()
            .grid;
        let aic = select(&sim.dataset, &sim.covariates, &grid, Criterion::Aic, &opts).unwrap();
        let bic = select(&sim.dataset, &sim.covariates, &grid, Criterion::Bic, &opts).unwrap();
        assert!(
            bic.chosen_scores().df <= aic.chosen_scores().df,
            "seed {seed}: bic df {} > aic df {}",
            bic.chosen_scores().df,
            aic.chosen_scores().df
        );
    }
}

#[test]
fn chosen_cell_minimizes_the_criterion() {
    let sim = simulated(2);
    let opts = small_options();
    let grid = build_grid(&sim.dataset, &sim.covariates, &opts)
        .unwrap()
        .grid;
    let res = select(&sim.dataset, &sim.covariates, &grid, Criterion::Bic, &opts).unwrap();
    let best = res.chosen_scores().bic;
    assert!(res
        .cells
        .iter()
        .filter_map(|c| c.scores)
        .all(|s| s.bic >= best));
    assert_eq!(res.cells.len(), grid.len());
}
