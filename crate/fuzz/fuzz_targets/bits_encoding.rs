#![no_main]

use libfuzzer_sys::fuzz_target;
use qkdkit::BitString;

fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let len = u16::from_le_bytes([data[0], data[1]]) as usize;
    let rest = &data[2..];

    if let Ok(bits) = BitString::from_packed(rest, len) {
        assert_eq!(bits.to_packed(), rest);
    }
    if let Ok(text) = std::str::from_utf8(rest) {
        if let Ok(bits) = BitString::from_base64(text, len) {
            assert_eq!(bits.len(), len);
            assert_eq!(BitString::from_base64(&bits.to_base64(), len).unwrap(), bits);
        }
        if let Ok(bits) = BitString::parse(text) {
            assert_eq!(bits.to_string(), text);
        }
    }
});
