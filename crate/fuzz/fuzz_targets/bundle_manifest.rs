#![no_main]

use jigsaw_core::bundle::BundleManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = BundleManifest::from_json(data) {
        if let Ok(Some(truth)) = m.truth() {
            truth.validate(m.piece_count).expect("accepted truth validates");
            let _ = truth.adjacent_pairs();
        }
    }
});
