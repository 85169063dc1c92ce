#![no_main]

use jigsaw_core::Network;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(net) = Network::decode(data) {
        assert_eq!(net.encode(), data);
        let x = vec![0.5; net.input_len()];
        let _ = net.probabilities(&x);
    }
});
