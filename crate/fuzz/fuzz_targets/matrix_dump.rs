#![no_main]

use jigsaw_core::compat::read_matrix_dump;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((edges, values)) = read_matrix_dump(data) {
        assert_eq!(values.len(), edges * edges);
    }
});
