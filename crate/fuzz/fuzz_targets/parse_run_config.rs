// The config parser must never panic on arbitrary input; it may return Err.
#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = oisim::config::parse_run_config("fuzz", text);
    }
});
