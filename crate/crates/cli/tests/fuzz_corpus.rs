//! Replays the checked-in fuzz seeds through the same checks as the fuzz
//! targets, so the invariants run on stable without libFuzzer.

use std::path::{Path, PathBuf};

use scamdyn_cli::RunConfig;
use scamdyn_core::data::{parse_reports, pool, write_reports};
use scamdyn_core::integrators::read_trajectory_csv;

fn seeds(target: &str) -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds for {target}");
    files
}

#[test]
fn parse_reports_seeds() {
    let mut accepted = 0;
    for path in seeds("parse_reports") {
        let text = std::fs::read_to_string(&path).unwrap();
        if let Ok(series) = parse_reports(&text) {
            accepted += 1;
            assert_eq!(parse_reports(&write_reports(&series)).unwrap(), series, "{}", path.display());
            let _ = pool(&series);
        }
    }
    assert!(accepted >= 2);
}

#[test]
fn parse_config_seeds() {
    let mut accepted = 0;
    for path in seeds("parse_config") {
        let text = std::fs::read_to_string(&path).unwrap();
        if let Ok(cfg) = RunConfig::parse(&text) {
            accepted += 1;
            let _ = cfg.fit.bounds();
            let _ = cfg.sensitivity.ranges();
            let _ = cfg.parameters().validate();
        }
    }
    assert!(accepted >= 3);
}

#[test]
fn read_trajectory_csv_seeds() {
    let mut accepted = 0;
    for path in seeds("read_trajectory_csv") {
        let bytes = std::fs::read(&path).unwrap();
        if let Ok((times, states)) = read_trajectory_csv(bytes.as_slice()) {
            accepted += 1;
            assert_eq!(times.len(), states.len());
        }
    }
    assert!(accepted >= 1);
}
