#![no_main]

use libfuzzer_sys::fuzz_target;
use tramls::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::parse(text) {
            // non-finite numbers have no JSON form, so only serialize
            let _ = serde_json::to_string(&cfg);
        }
    }
});
