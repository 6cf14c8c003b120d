#![no_main]

use libfuzzer_sys::fuzz_target;
use scamdyn_cli::RunConfig;

fuzz_target!(|input: &str| {
    if let Ok(cfg) = RunConfig::parse(input) {
        let _ = cfg.fit.bounds();
        let _ = cfg.sensitivity.ranges();
        let _ = cfg.parameters().validate();
        let _ = cfg.population();
    }
});
