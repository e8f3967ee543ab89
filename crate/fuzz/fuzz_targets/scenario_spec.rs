#![no_main]

use libfuzzer_sys::fuzz_target;
use uml_core::simenv::ScenarioSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = ScenarioSpec::from_json(text);
    }
});
