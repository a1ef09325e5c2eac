#![no_main]

use libfuzzer_sys::fuzz_target;
use sfpl::data::read_new_objects;

fuzz_target!(|data: &[u8]| {
    let names = ["x1".to_string(), "x2".to_string()];
    if let Ok(new) = read_new_objects(data, &names) {
        assert_eq!(new.labels.len(), new.rows.len());
        assert!(new
            .rows
            .iter()
            .all(|r| r.len() == 2 && r.iter().all(|v| v.is_finite())));
    }
});
