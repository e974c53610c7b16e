// Dataset loading validates untrusted JSON; consistency checks on a loaded
// dataset must never panic.
#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(ds) = oisim::datasim::LabDataset::from_json_str(text) {
            let predicted = vec![0.5; ds.len()];
            let _ = oisim::datasim::is_consistent(&ds, &predicted);
        }
    }
});
