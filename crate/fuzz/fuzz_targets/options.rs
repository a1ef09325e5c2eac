#![no_main]

use libfuzzer_sys::fuzz_target;
use sfpl::selection::{Criterion, DfRule};
use sfpl::simulation::Method;

fuzz_target!(|data: &str| {
    let _ = data.parse::<Criterion>();
    let _ = data.parse::<DfRule>();
    let _ = data.parse::<Method>();
});
