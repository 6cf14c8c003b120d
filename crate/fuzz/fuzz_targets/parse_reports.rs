#![no_main]

use libfuzzer_sys::fuzz_target;
use scamdyn_core::data::{parse_reports, pool, write_reports};

fuzz_target!(|input: &str| {
    let Ok(series) = parse_reports(input) else {
        return;
    };
    // Anything accepted must survive a write/parse cycle unchanged.
    let again = parse_reports(&write_reports(&series)).expect("rendered reports reparse");
    assert_eq!(again, series);
    let _ = pool(&series);
});
