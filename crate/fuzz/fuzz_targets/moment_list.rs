#![no_main]

use dmm_core::basis::AngularBasis;
use dmm_core::realizability::{check, MomentVector, DEFAULT_TOLERANCE};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(values) = dmm_core::bench::parse_moments(text) {
            if let Ok(u) = MomentVector::new(AngularBasis::dmm2(), values) {
                let _ = check(&u, DEFAULT_TOLERANCE);
            }
        }
    }
});
