#![no_main]

use libfuzzer_sys::fuzz_target;
use sfpl::data::{read_rankings, write_rankings, ObjectCatalog};

fuzz_target!(|data: &[u8]| {
    let catalog = ObjectCatalog::new(vec!["a".into(), "b".into(), "c".into(), "d".into()]).unwrap();
    if let Ok(parsed) = read_rankings(data, &catalog) {
        // Anything accepted must survive a write/read cycle unchanged.
        let mut buf = Vec::new();
        write_rankings(&parsed, &catalog, &mut buf).unwrap();
        assert_eq!(read_rankings(buf.as_slice(), &catalog).unwrap(), parsed);
    }
});
