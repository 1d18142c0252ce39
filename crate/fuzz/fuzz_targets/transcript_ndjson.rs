#![no_main]

use libfuzzer_sys::fuzz_target;
use qkdkit::cascade::{parse_ndjson, recount};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(messages) = parse_ndjson(text) {
        let (ab, ba) = recount(&messages);
        let total: u64 = messages.iter().map(|m| m.payload_bits as u64).sum();
        assert_eq!(ab + ba, total);
    }
});
