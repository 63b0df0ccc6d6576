#![no_main]

use dmm_core::bench::ModelId;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = text.parse::<ModelId>() {
            assert_eq!(m.to_string().parse::<ModelId>().unwrap(), m);
            let _ = m.basis();
        }
    }
});
