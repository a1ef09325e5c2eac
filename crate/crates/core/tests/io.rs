mod common;

use std::fs;
use std::path::Path;

use proptest::prelude::*;
use sfpl::data::{
    read_coefficient_table, read_covariates, read_new_objects, read_rankings,
    write_coefficient_table, write_covariates, write_rankings, CoefficientTable, ObjectCatalog,
};
use sfpl::Error;

fn catalog(m: usize) -> ObjectCatalog {
    ObjectCatalog::new((0..m).map(|j| format!("o{j}")).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rankings_round_trip(seed in 0u64..10_000, k in 1usize..4, n in 1usize..6) {
        let inst = common::instance(seed, k, 6, 2, n, 3);
        let cat = catalog(6);
        let mut buf = Vec::new();
        write_rankings(&inst.data, &cat, &mut buf).unwrap();
        prop_assert_eq!(read_rankings(buf.as_slice(), &cat).unwrap(), inst.data);
    }

    #[test]
    fn covariates_round_trip(
        rows in proptest::collection::vec(proptest::collection::vec(-1e12f64..1e12, 3), 2..8),
    ) {
        let labels: Vec<String> = (0..rows.len()).map(|j| format!("obj {j}")).collect();
        let x = sfpl::data::CovariateMatrix::from_rows(
            rows,
            vec!["a".into(), "b,c".into(), "d".into()],
        ).unwrap();
        let mut buf = Vec::new();
        write_covariates(&labels, &x, &mut buf).unwrap();
        let (cat, back) = read_covariates(buf.as_slice()).unwrap();
        prop_assert_eq!(cat.labels(), labels.as_slice());
        prop_assert_eq!(back, x);
    }

    #[test]
    fn coefficient_tables_round_trip(seed in 0u64..10_000, k in 1usize..5, p in 1usize..5) {
        let mut r = common::rng(seed);
        let table = CoefficientTable {
            groups: (0..k).map(|g| format!("g{g}")).collect(),
            variables: (0..p).map(|q| format!("v{q}")).collect(),
            coefficients: common::coefficients(&mut r, k, p, 1e3),
        };
        let mut buf = Vec::new();
        write_coefficient_table(&table, None, &mut buf).unwrap();
        prop_assert_eq!(read_coefficient_table(buf.as_slice()).unwrap(), table);
    }

    #[test]
    fn parsers_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
        let cat = catalog(3);
        let _ = read_rankings(bytes.as_slice(), &cat);
        let _ = read_covariates(bytes.as_slice());
        let _ = read_new_objects(bytes.as_slice(), &["x".to_string()]);
        let _ = read_coefficient_table(bytes.as_slice());
    }
}

type Case = (&'static str, fn(&Error) -> bool);

#[test]
fn ranking_errors_are_specific() {
    let cat = catalog(3);
    let cases: [Case; 4] = [
        (
            "group,ranker,position,object\ng,1,1,o0\ng,1,2,nope\n",
            |e| matches!(e, Error::UnknownObject { .. }),
        ),
        ("group,ranker,position,object\ng,1,1,o0\ng,1,2,o0\n", |e| {
            matches!(e, Error::DuplicateObject { .. })
        }),
        ("group,ranker,position,object\ng,1,1,o0\ng,1,3,o1\n", |e| {
            matches!(e, Error::PositionGap { .. })
        }),
        ("grp,ranker,position,object\n", |e| {
            matches!(e, Error::Malformed { .. })
        }),
    ];
    for (text, check) in cases {
        let err = read_rankings(text.as_bytes(), &cat).unwrap_err();
        assert!(check(&err), "{text:?} gave {err:?}");
    }
}

#[test]
fn covariate_errors_are_specific() {
    assert!(matches!(
        read_covariates("object,x\na,1\na,2\n".as_bytes()),
        Err(Error::DuplicateLabel(_))
    ));
    assert!(matches!(
        read_covariates("object,x\na,1\nb,inf\n".as_bytes()),
        Err(Error::NonFiniteCovariate { .. })
    ));
    assert!(matches!(
        read_covariates("object,x\na,1\n".as_bytes()),
        Err(Error::CatalogTooSmall(1))
    ));
    let names = vec!["x".to_string(), "y".to_string()];
    assert!(read_new_objects("object,x,z\nn,1,2\n".as_bytes(), &names).is_err());
    assert!(read_new_objects("object,x\nn,1\n".as_bytes(), &names).is_err());
    let swapped = read_new_objects("object,y,x\nn,1,2\n".as_bytes(), &names).unwrap();
    assert_eq!(swapped.rows, vec![vec![2.0, 1.0]]);
}

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<Vec<u8>> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| fs::read(e.unwrap().path()).unwrap())
        .collect();
    out.sort();
    out
}

#[test]
fn fuzz_seeds_parse() {
    for s in seeds("covariates") {
        read_covariates(s.as_slice()).unwrap();
    }
    for s in seeds("coefficients") {
        read_coefficient_table(s.as_slice()).unwrap();
    }
    let cat = ObjectCatalog::new(["a", "b", "c", "d"].map(String::from).to_vec()).unwrap();
    for s in seeds("rankings") {
        read_rankings(s.as_slice(), &cat).unwrap();
    }
    let names = vec!["x1".to_string(), "x2".to_string()];
    for s in seeds("new_objects") {
        read_new_objects(s.as_slice(), &names).unwrap();
    }
}
