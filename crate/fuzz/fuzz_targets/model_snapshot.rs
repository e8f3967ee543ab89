#![no_main]

use libfuzzer_sys::fuzz_target;
use uml_core::store::ModelSnapshot;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(snap) = ModelSnapshot::from_json(text) {
            if let Ok(learner) = snap.restore() {
                let _ = ModelSnapshot::capture(&learner).to_canonical_json();
            }
        }
    }
});
