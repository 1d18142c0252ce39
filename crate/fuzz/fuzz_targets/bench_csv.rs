#![no_main]

use libfuzzer_sys::fuzz_target;
use qkdkit::bench::{from_csv, read_csv, to_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_csv(data) {
        assert!(rows.windows(2).all(|w| w[0].n < w[1].n));
        assert_eq!(from_csv(&to_csv(&rows)).expect("written rows parse"), rows);
    }
});
