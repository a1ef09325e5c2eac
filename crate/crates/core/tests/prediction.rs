mod common;

use proptest::prelude::*;
use sfpl::data::NewObjects;
use sfpl::prediction::{predict_new, ranks_descending};

fn labels(n: usize, prefix: &str) -> Vec<String> {
    (0..n).map(|j| format!("{prefix}{j}")).collect()
}

proptest! {
    #[test]
    fn ranks_are_a_permutation(values in proptest::collection::vec(-5.0f64..5.0, 1..20)) {
        let ranks = ranks_descending(&values);
        let mut sorted = ranks.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (1..=values.len()).collect::<Vec<_>>());
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] > values[j] {
                    prop_assert!(ranks[i] < ranks[j]);
                }
            }
        }
    }

    #[test]
    fn new_object_order_does_not_change_ranks(seed in 0u64..10_000) {
        let mut r = common::rng(seed);
        let x = common::covariates(&mut r, 6, 2);
        let b = common::coefficients(&mut r, 2, 2, 1.0);
        let extra = common::covariates(&mut r, 3, 2);
        let rows: Vec<Vec<f64>> = (0..3).map(|j| extra.row(j).to_vec()).collect();
        let forward = NewObjects { labels: labels(3, "n"), rows: rows.clone() };
        let backward = NewObjects {
            labels: labels(3, "n").into_iter().rev().collect(),
            rows: rows.into_iter().rev().collect(),
        };
        let groups = vec!["a".to_string(), "b".to_string()];
        let t1 = predict_new(&b, &x, &labels(6, "o"), &forward, groups.clone()).unwrap();
        let t2 = predict_new(&b, &x, &labels(6, "o"), &backward, groups).unwrap();
        for g in 0..2 {
            for j in 0..6 {
                prop_assert_eq!(t1.ranks[g][j], t2.ranks[g][j]);
            }
            for j in 0..3 {
                prop_assert_eq!(t1.ranks[g][6 + j], t2.ranks[g][8 - j]);
            }
        }
    }
}

#[test]
fn standardized_fits_map_raw_new_covariates() {
    let mut r = common::rng(3);
    let raw = common::covariates(&mut r, 6, 2);
    let x = raw.standardize().unwrap();
    let b = common::coefficients(&mut r, 1, 2, 1.0);
    // A new object identical to catalog object 2 must tie with it.
    let new = NewObjects {
        labels: vec!["twin".into()],
        rows: vec![raw.row(2).to_vec()],
    };
    let t = predict_new(&b, &x, &labels(6, "o"), &new, vec!["g".into()]).unwrap();
    assert!((t.worths[(0, 6)] / t.worths[(0, 2)] - 1.0).abs() < 1e-12);
    assert!(t.predicted_only[6] && !t.predicted_only[2]);
}

#[test]
fn duplicate_new_labels_are_rejected() {
    let mut r = common::rng(4);
    let x = common::covariates(&mut r, 4, 1);
    let b = common::coefficients(&mut r, 1, 1, 1.0);
    let clash = NewObjects {
        labels: vec!["o1".into()],
        rows: vec![vec![0.0]],
    };
    assert!(predict_new(&b, &x, &labels(4, "o"), &clash, vec!["g".into()]).is_err());
    let short = NewObjects {
        labels: vec!["n".into()],
        rows: vec![vec![0.0, 1.0]],
    };
    assert!(predict_new(&b, &x, &labels(4, "o"), &short, vec!["g".into()]).is_err());
}
