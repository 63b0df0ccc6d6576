#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(p) = dmm_core::bench::parse_profile(text) {
            assert!(p.rows.iter().all(|r| r.len() == p.columns.len()));
            let _ = dmm_core::bench::compare_profiles(&p, &p, dmm_core::bench::Norm::L1);
        }
    }
});
