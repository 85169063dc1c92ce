#![no_main]

use jigsaw_core::Dataset;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = Dataset::decode(data) {
        let mut out = Vec::new();
        ds.write_binary(&mut out).unwrap();
        assert_eq!(out, data);
    }
});
