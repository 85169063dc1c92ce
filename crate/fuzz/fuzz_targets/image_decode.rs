#![no_main]

use jigsaw_core::{raster::to_normalized_yuv, RawImage};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = RawImage::decode(data) {
        if img.width() * img.height() <= 1 << 16 {
            let n = to_normalized_yuv(&img).expect("decoded images normalize");
            assert!(n.data.iter().all(|v| v.is_finite()));
        }
    }
});
