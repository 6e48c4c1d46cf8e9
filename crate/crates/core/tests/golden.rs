//! Byte comparison of emitted tables against checked-in files.

use std::path::PathBuf;

use slowfast::scenario::{load_config, run_sweep, SWEEP_HEADER};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn constant_reaction_sweep_matches_golden_file() {
    let cfg = load_config(&root().join("../../scenarios/constant_c.toml")).unwrap();
    let report = run_sweep(&cfg).unwrap();
    let golden = std::fs::read_to_string(root().join("tests/golden/constant_c_sweep.csv")).unwrap();
    assert_eq!(report.csv(), golden);
    assert!(golden.starts_with(&format!("{SWEEP_HEADER}\n")));
    assert!(report.passed());
}
