#![no_main]

use libfuzzer_sys::fuzz_target;
use scamdyn_core::integrators::read_trajectory_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok((times, states)) = read_trajectory_csv(data) {
        assert_eq!(times.len(), states.len());
    }
});
