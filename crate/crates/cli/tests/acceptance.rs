//! Acceptance criteria 1 to 11. Prints one line per criterion, then fails if
//! any of them did.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use heatkernel_cli::config::LoadedConfig;
use heatkernel_cli::verify::{run_suite, CriterionResult};

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn determinism() -> CriterionResult {
    let bin = env!("CARGO_BIN_EXE_heatkernel");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut codes = Vec::new();
    for d in &dirs {
        let status = Command::new(bin)
            .args(["verify", "--out"])
            .arg(d.path())
            .env("HEATKERNEL_THREADS", "4")
            .output()
            .unwrap()
            .status;
        codes.push(status.code());
    }
    let (a, b) = (files(dirs[0].path()), files(dirs[1].path()));
    let identical = !a.is_empty() && a == b;
    CriterionResult {
        id: 11,
        name: "determinism",
        passed: identical && codes == [Some(0), Some(0)],
        summary: format!(
            "two `verify` runs: exit codes {codes:?}, {} artifacts {}",
            a.len(),
            if identical { "byte-identical" } else { "DIFFER" }
        ),
    }
}

#[test]
fn acceptance() {
    let cfg = LoadedConfig::default_config().unwrap();
    let provenance = format!("config={} suite=acceptance seed={}", cfg.hash, cfg.config.seed);
    let mut results = run_suite(cfg.config.seed, &provenance).unwrap().results;
    results.push(determinism());
    for r in &results {
        println!("{}", r.line());
    }
    let failed: Vec<u8> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    assert_eq!(results.len(), 11);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
