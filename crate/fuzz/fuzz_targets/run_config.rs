#![no_main]

use jigsaw_cli::config::parse_config;
use libfuzzer_sys::fuzz_target;

// Leading byte `J` selects JSON, anything else TOML.
fuzz_target!(|data: &[u8]| {
    if let Some((&format, rest)) = data.split_first() {
        if let Ok(text) = std::str::from_utf8(rest) {
            let _ = parse_config(text, format == b'J');
        }
    }
});
