#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use subjectdp::data::{read_csv, CsvSchema};

fuzz_target!(|data: &[u8]| {
    let schema = CsvSchema::default();
    if let Ok(reg) = read_csv(data, &schema, None, Path::new("fuzz.csv")) {
        assert!(reg.iter_items().all(|it| it.features.iter().all(|v| v.is_finite())));
    }
});
