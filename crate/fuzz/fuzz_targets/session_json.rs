#![no_main]

use libfuzzer_sys::fuzz_target;
use qkdkit::protocol::SiftedSession;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(session) = SiftedSession::from_json(text) {
            let again = SiftedSession::from_json(&session.to_json()).expect("serialized session parses");
            assert_eq!(session, again);
        }
    }
});
