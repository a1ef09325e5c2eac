mod common;

use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use sfpl::data::{CovariateMatrix, PartialRanking};
use sfpl::likelihood::{
    evaluate, gradient, log_ranking_probability, neg_log_likelihood, ranking_probability,
    CoefficientSet,
};
use sfpl::simulation::enumerate_ranking_distribution;

fn shifted(x: &CovariateMatrix, shift: &[f64]) -> CovariateMatrix {
    let rows = (0..x.nrows())
        .map(|j| x.row(j).iter().zip(shift).map(|(v, s)| v + s).collect())
        .collect();
    CovariateMatrix::from_rows(rows, x.variable_names().to_vec()).unwrap()
}

#[test]
fn matches_unstabilized_sum_on_moderate_scores() {
    for seed in 0..20 {
        let inst = common::instance(seed, 3, 9, 4, 15, 4);
        let mut r = common::rng(seed + 100);
        let b = common::coefficients(&mut r, 3, 4, 1.0);
        let fast = neg_log_likelihood(&b, &inst.data, &inst.x).unwrap();
        let slow = common::naive_nll(&b, &inst.data, &inst.x);
        assert!(
            (fast - slow).abs() < 1e-10 * slow.abs().max(1.0),
            "{fast} vs {slow}"
        );
    }
}

#[test]
fn huge_scores_stay_finite() {
    let x =
        CovariateMatrix::from_rows(vec![vec![400.0], vec![-400.0], vec![0.0]], vec!["x".into()])
            .unwrap();
    let r = PartialRanking::new(vec![1, 0, 2], 3).unwrap();
    let lp = log_ranking_probability(&r, &[2.0], &x).unwrap();
    assert!(lp.is_finite() && lp < -1000.0);
}

#[test]
fn single_object_stage_contributes_nothing() {
    let x = CovariateMatrix::from_rows(vec![vec![1.0], vec![-0.5]], vec!["x".into()]).unwrap();
    let pair = PartialRanking::new(vec![0, 1], 2).unwrap();
    let w = [1.0f64.exp(), (-0.5f64).exp()];
    let p = ranking_probability(&pair, &[1.0], &x).unwrap();
    assert!((p - w[0] / (w[0] + w[1])).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hessian_is_positive_semidefinite(seed in 0u64..10_000, k in 1usize..4, p in 1usize..6) {
        let inst = common::instance(seed, k, 8, p, 10, 3);
        let mut r = common::rng(seed ^ 0xabc);
        let b = common::coefficients(&mut r, k, p, 2.0);
        let h = evaluate(&b, &inst.data, &inst.x).unwrap().hessian;
        let eig = SymmetricEigen::new(h.clone());
        let scale = h.amax().max(1.0);
        prop_assert!(eig.eigenvalues.min() >= -1e-10 * scale);
    }

    #[test]
    fn shifting_every_object_leaves_likelihood_unchanged(
        seed in 0u64..10_000,
        shift in proptest::collection::vec(-3.0f64..3.0, 3),
    ) {
        let inst = common::instance(seed, 2, 7, 3, 12, 3);
        let mut r = common::rng(seed ^ 0x5eed);
        let b = common::coefficients(&mut r, 2, 3, 1.0);
        let moved = shifted(&inst.x, &shift);
        let a = neg_log_likelihood(&b, &inst.data, &inst.x).unwrap();
        let c = neg_log_likelihood(&b, &inst.data, &moved).unwrap();
        prop_assert!((a - c).abs() < 1e-9 * a.abs().max(1.0));
        let ga = gradient(&b, &inst.data, &inst.x).unwrap();
        let gc = gradient(&b, &inst.data, &moved).unwrap();
        prop_assert!((ga - gc).amax() < 1e-8);
    }

    #[test]
    fn group_order_permutes_results(seed in 0u64..10_000, k in 2usize..5) {
        let inst = common::instance(seed, k, 7, 2, 8, 3);
        let order: Vec<usize> = (0..k).rev().collect();
        let data2 = inst.data.reorder_groups(&order).unwrap();
        let b2 = inst.truth.reorder_groups(&order);
        let a = neg_log_likelihood(&inst.truth, &inst.data, &inst.x).unwrap();
        let c = neg_log_likelihood(&b2, &data2, &inst.x).unwrap();
        prop_assert!((a - c).abs() < 1e-10 * a.abs().max(1.0));
        let g = gradient(&inst.truth, &inst.data, &inst.x).unwrap();
        let g2 = gradient(&b2, &data2, &inst.x).unwrap();
        for (new, &old) in order.iter().enumerate() {
            prop_assert!((g.row(old) - g2.row(new)).amax() < 1e-10);
        }
    }

    #[test]
    fn enumeration_is_a_distribution(seed in 0u64..10_000, m in 1usize..=5) {
        let mut r = common::rng(seed);
        let x = common::covariates(&mut r, 6, 2);
        let beta = common::coefficients(&mut r, 1, 2, 2.0).beta(0);
        let subset: Vec<usize> = (0..m).collect();
        let dist = enumerate_ranking_distribution(&beta, &x, &subset).unwrap();
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        prop_assert_eq!(dist.len(), (1..=m).product::<usize>());
        prop_assert!((total - 1.0).abs() < 1e-12);
        for (order, p) in &dist {
            let r = PartialRanking::new(order.clone(), 6).unwrap();
            let q = ranking_probability(&r, &beta, &x).unwrap();
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    /// The odds of a over b as first choice do not depend on which other
    /// objects are on offer.
    #[test]
    fn first_choice_odds_ignore_other_objects(seed in 0u64..10_000) {
        let mut r = common::rng(seed);
        let x = common::covariates(&mut r, 5, 2);
        let beta = common::coefficients(&mut r, 1, 2, 1.5).beta(0);
        let first = |subset: &[usize], a: usize| -> f64 {
            enumerate_ranking_distribution(&beta, &x, subset)
                .unwrap()
                .iter()
                .filter(|(o, _)| o[0] == a)
                .map(|(_, p)| p)
                .sum()
        };
        let small = first(&[0, 1], 0) / first(&[0, 1], 1);
        let large = first(&[0, 1, 2, 3], 0) / first(&[0, 1, 2, 3], 1);
        prop_assert!((small / large - 1.0).abs() < 1e-10);
    }

    #[test]
    fn coefficient_vector_round_trip(seed in 0u64..10_000, k in 1usize..5, p in 1usize..6) {
        let mut r = common::rng(seed);
        let b = common::coefficients(&mut r, k, p, 3.0);
        let v = b.to_vector();
        prop_assert_eq!(CoefficientSet::from_vector(k, p, &v).unwrap(), b.clone());
        for g in 0..k {
            for q in 0..p {
                prop_assert_eq!(v[g * p + q], b.get(g, q));
            }
        }
    }
}

#[test]
fn gradient_rows_depend_only_on_their_group() {
    let inst = common::instance(9, 3, 8, 2, 10, 3);
    let mut b = inst.truth.clone().into_matrix();
    let before = gradient(
        &CoefficientSet::from_matrix(b.clone()).unwrap(),
        &inst.data,
        &inst.x,
    )
    .unwrap();
    b[(2, 0)] += 0.7;
    let after = gradient(
        &CoefficientSet::from_matrix(b).unwrap(),
        &inst.data,
        &inst.x,
    )
    .unwrap();
    assert_eq!(before.row(0), after.row(0));
    assert_eq!(before.row(1), after.row(1));
    assert_ne!(before.row(2), after.row(2));
}
