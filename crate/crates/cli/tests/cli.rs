use std::path::Path;
use std::process::{Command, Output};

fn heatkernel(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heatkernel"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn explicit_engine_rejects_non_quadratic_potential() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[potential]\nkind = \"polynomial\"\ncoefficients = [0.0, 0.0, 0.0, 0.0, 1.0]\n[engine]\nkind = \"explicit\"\n",
    );
    let out = heatkernel(&["kernel", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("quadratic"));
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[potential]\nkind = \"polynomial\"\ncoefficients = [1.0]\nbogus = 3\n");
    assert_eq!(heatkernel(&["kernel", "--config", &cfg], dir.path()).status.code(), Some(2));
    let missing = dir.path().join("nope.toml");
    let out = heatkernel(&["kernel", "--config", missing.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn chain_reports_step_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = heatkernel(&["chain"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("M=257"));
    let csv = std::fs::read_to_string(dir.path().join("chain.csv")).unwrap();
    // header, provenance, 258 waypoints
    assert_eq!(csv.split_terminator("\r\n").count(), 260);
}

#[test]
fn kernel_grid_has_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[potential]\nkind = \"polynomial\"\ncoefficients = [0.0, 0.0, 1.0]\n\
         [grid]\nx_min = -1.0\nx_max = 1.0\nnx = 3\ny_min = -1.0\ny_max = 1.0\nny = 3\nt = [0.1, 1.0]\n",
    );
    let out = heatkernel(&["kernel", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("kernel.csv")).unwrap();
    let lines: Vec<&str> = csv.split_terminator("\r\n").collect();
    assert_eq!(lines[0], "x,y,t,log_p,p");
    assert!(lines[1].starts_with("# config="));
    assert_eq!(lines.len() - 2, 18);
    assert!(lines[2..].iter().all(|l| l.split(',').count() == 5));
}

#[test]
fn empty_grid_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[potential]\nkind = \"constant\"\nvalue = 1.0\n[grid]\nt = []\n",
    );
    let out = heatkernel(&["kernel", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("kernel.csv")).unwrap();
    let lines: Vec<&str> = csv.split_terminator("\r\n").collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "x,y,t,log_p,p");
}

#[test]
fn spectral_engine_agrees_with_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[potential]\nkind = \"polynomial\"\ncoefficients = [1.0, 1.0, 1.0]\n\
         [engine]\nkind = \"spectral\"\nhalf_width = 8.0\nnodes = 799\nt_min = 0.1\n\
         [grid]\nnx = 5\nny = 5\nt = [0.1, 0.5]\n",
    );
    let out = heatkernel(&["kernel", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_heatkernel"))
        .args(["chain", "--out"])
        .arg(dir.path())
        .env("HEATKERNEL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
