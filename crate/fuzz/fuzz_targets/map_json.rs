// Persisted-map loading validates untrusted JSON; a loaded map must also be
// safe to evaluate.
#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(map) = oisim::hdmr::CutHdmrMap::from_json_str(text) {
            let _ = map.eval(&map.reference);
        }
    }
});
