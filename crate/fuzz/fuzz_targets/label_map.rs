#![no_main]

use libfuzzer_sys::fuzz_target;
use uml_core::experiments::LabelMap;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = LabelMap::from_json(text);
    }
});
