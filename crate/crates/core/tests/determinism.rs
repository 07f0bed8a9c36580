mod common;

use std::fs;

use hetfl::experiment::run_experiment;

#[test]
fn reruns_write_identical_results() {
    let cfg = common::tiny_config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_experiment(&cfg, a.path(), 1).unwrap();
    let second = run_experiment(&cfg, b.path(), 2).unwrap();
    assert!(first.failures.is_empty(), "{:?}", first.failures);
    assert_eq!(first.rows.len(), 3, "OFR, USR and FULL");
    assert_eq!(first.rows.len(), second.rows.len());
    let csv = |d: &std::path::Path| fs::read(d.join("results.csv")).unwrap();
    assert_eq!(csv(a.path()), csv(b.path()));
}

#[test]
fn finished_cells_are_not_rerun() {
    let cfg = common::tiny_config();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&cfg, dir.path(), 1).unwrap();
    let before = fs::read(dir.path().join("results.csv")).unwrap();
    let again = run_experiment(&cfg, dir.path(), 1).unwrap();
    assert_eq!(again.rows.len(), 3);
    assert_eq!(before, fs::read(dir.path().join("results.csv")).unwrap());
}
