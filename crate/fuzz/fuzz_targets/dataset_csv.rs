#![no_main]

use libfuzzer_sys::fuzz_target;
use qkdkit::dataset::{from_csv, to_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = qkdkit::dataset::read_csv(data) {
        let again = from_csv(&to_csv(&records)).expect("written dataset parses");
        assert_eq!(records, again);
    }
});
