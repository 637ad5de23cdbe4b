#![no_main]

use libfuzzer_sys::fuzz_target;
use subjectdp_cli::report::{group_size_histogram, parse_audits, parse_rounds};

fuzz_target!(|data: &[u8]| {
    if let Ok(audits) = parse_audits(data) {
        let hist = group_size_histogram(&audits);
        let counted: usize = hist.iter().map(|&(_, n)| n).sum();
        assert_eq!(counted, audits.iter().filter(|a| a.observed_z.is_some()).count());
    }
    let _ = parse_rounds(data);
});
