#![no_main]

use libfuzzer_sys::fuzz_target;
use subjectdp::models::{decode_checkpoint, encode_checkpoint};

// Input layout: sidecar JSON, a NUL byte, then the raw parameter bytes.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let Ok(json) = std::str::from_utf8(&data[..split]) else { return };
    let bytes = data.get(split + 1..).unwrap_or(&[]);
    if let Ok((spec, params)) = decode_checkpoint(bytes, json) {
        let (b, j) = encode_checkpoint(&spec, &params).expect("decoded checkpoint must re-encode");
        let (spec2, params2) = decode_checkpoint(&b, &j).expect("re-encoded checkpoint must decode");
        assert_eq!(spec, spec2);
        assert_eq!(params.values().len(), params2.values().len());
        assert!(params.values().iter().zip(params2.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
});
