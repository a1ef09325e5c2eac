#![no_main]

use libfuzzer_sys::fuzz_target;
use sfpl::data::{read_coefficient_table, write_coefficient_table};

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = read_coefficient_table(data) {
        let mut buf = Vec::new();
        write_coefficient_table(&table, None, &mut buf).unwrap();
        assert_eq!(read_coefficient_table(buf.as_slice()).unwrap(), table);
    }
});
