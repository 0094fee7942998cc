#![no_main]

use libfuzzer_sys::fuzz_target;
use tramls::io::parse_bound;

fuzz_target!(|data: &[u8]| {
    if let Ok(cell) = std::str::from_utf8(data) {
        for upper in [false, true] {
            if let Ok(v) = parse_bound(cell, upper) {
                assert!(!v.is_nan());
            }
        }
    }
});
