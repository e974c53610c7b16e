// Family records round-trip through JSON; loading must never panic.
#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(record) = oisim::inversion::FamilyRecord::from_json_str(text) {
            let _ = oisim::inversion::family_bounds(&record.family);
        }
    }
});
