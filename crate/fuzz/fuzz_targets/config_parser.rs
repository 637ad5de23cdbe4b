#![no_main]

use libfuzzer_sys::fuzz_target;
use subjectdp_cli::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::parse(text) {
        let kv = cfg.to_kv();
        let again = RunConfig::parse(&kv).expect("resolved config must parse");
        assert_eq!(again.to_kv(), kv);
    }
});
