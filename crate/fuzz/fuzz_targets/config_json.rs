#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = dmm_core::bench::parse_config(text) {
            // accepted configs must survive a round trip
            let again = serde_json::to_string(&cfg).unwrap();
            assert_eq!(dmm_core::bench::parse_config(&again).unwrap(), cfg);
        }
    }
});
