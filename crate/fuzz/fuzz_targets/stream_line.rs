#![no_main]

use libfuzzer_sys::fuzz_target;
use uml_core::simenv::{read_stream, SimFrame};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = SimFrame::from_json_line(text);
    }
    let _ = read_stream(data);
});
