#![no_main]

use libfuzzer_sys::fuzz_target;
use sfpl::data::{check_identifiability, read_covariates, DEFAULT_RANK_TOL};

fuzz_target!(|data: &[u8]| {
    if let Ok((catalog, x)) = read_covariates(data) {
        assert_eq!(catalog.len(), x.nrows());
        let report = check_identifiability(&x, DEFAULT_RANK_TOL);
        assert!(report.rank <= x.ncols().min(x.nrows()));
        let _ = x.standardize();
    }
});
