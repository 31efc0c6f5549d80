use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pgs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pgs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn metrics(dir: &Path) -> Vec<String> {
    fs::read_to_string(dir.join("metrics.csv"))
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_writes_one_row_per_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let out = pgs(&["run", "--users", "2", "--schemes", "es", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let lines = metrics(dir.path());
    assert_eq!(lines[0], "scheme,M,sigma2,l_req,seed,Q_Net,F_Net,P_Net");
    assert_eq!(lines.len(), 2);
    assert!(dir.path().join("runs/es_M2_L4/power.csv").exists());
}

#[test]
fn sweep_covers_the_cross_product() {
    let dir = tempfile::tempdir().unwrap();
    let out = pgs(&[
        "sweep",
        "--users",
        "2,3",
        "--sigma2",
        "0,4",
        "--seeds",
        "2",
        "--schemes",
        "es,rp",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(metrics(dir.path()).len(), 1 + 2 * 2 * 2 * 2);
}

#[test]
fn empty_axis_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = pgs(&["sweep", "--users", "", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(!dir.path().join("metrics.csv").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(&a, "4"), (&b, "1")] {
        let out = pgs(&[
            "--threads",
            threads,
            "sweep",
            "--users",
            "2,3",
            "--sigma2",
            "0,4",
            "--seeds",
            "3",
            "--schemes",
            "es,pgs_minair_alg",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    assert_eq!(
        fs::read(a.path().join("metrics.csv")).unwrap(),
        fs::read(b.path().join("metrics.csv")).unwrap()
    );
    assert_eq!(
        fs::read(a.path().join("runs/pgs_minair_alg_M3_L4/x.csv")).unwrap(),
        fs::read(b.path().join("runs/pgs_minair_alg_M3_L4/x.csv")).unwrap()
    );
}

#[test]
fn thread_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pgs"))
        .env("PGS_THREADS", "1")
        .args(["run", "--users", "2", "--schemes", "rp", "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(metrics(dir.path()).len(), 2);
}

#[test]
fn export_milp_writes_mps_sections() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.mps");
    let out = pgs(&["export-milp", "--users", "2", "--mode", "min-power", "--out", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mps = fs::read_to_string(&path).unwrap();
    let mut at = 0;
    for section in ["NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"] {
        let found = mps[at..]
            .lines()
            .position(|l| l.starts_with(section))
            .unwrap_or_else(|| panic!("missing {section}"));
        at += mps[at..].lines().take(found).map(|l| l.len() + 1).sum::<usize>() + 1;
    }
    assert!(mps.lines().any(|l| l.trim_start().starts_with("BV ")));
}

#[test]
fn exact_scheme_above_guard_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = pgs(&["run", "--schemes", "pgs_minair_milp", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("above the limit"), "{}", stderr(&out));
}

#[test]
fn unknown_scheme_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = pgs(&["run", "--schemes", "oracle", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("oracle"), "{}", stderr(&out));
}

#[test]
fn missing_scenario_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = pgs(&["run", "--scenario", "/nonexistent.json", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
}
