#![no_main]

use libfuzzer_sys::fuzz_target;
use qkdkit::amplify::FinalKeySidecar;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sidecar) = FinalKeySidecar::from_json(text) {
        assert!(sidecar.output_len <= sidecar.input_len);
    }
});
