use std::path::Path;
use std::process::{Command, Output};

use evolvefem::analysis::{ErrorTable, CSV_HEADER};

fn evolvefem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evolvefem"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_arg(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn run_then_eoc_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ex1.csv");
    let out = evolvefem(&[
        "run",
        "--experiment",
        "ex1",
        "--degree",
        "1",
        "--levels",
        "3",
        "--tau",
        "0.05",
        "--tau-ref",
        "0.01",
        "--bdf",
        "2",
        "--out",
        path_arg(&csv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    let table = ErrorTable::from_csv(&text).unwrap();
    assert_eq!(table.rows.len(), 3);
    assert!(table
        .rows
        .iter()
        .all(|r| r.errors[4].is_none() && r.errors[0].is_some()));
    assert!(dir.path().join("ex1.json").exists());
    assert!(dir.path().join("ex1.timing.json").exists());

    let eoc = evolvefem(&["eoc", path_arg(&csv)]);
    assert!(eoc.status.success());
    let report = String::from_utf8(eoc.stdout).unwrap();
    assert!(report.contains("err_x_LinfH1"));
    assert!(!report.contains("err_u_L2H1"));
}

#[test]
fn config_file_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# small run\nexperiment = ex3\ndegree = 1\nlevels = 2\ntau = 0.05\nt_end = 0.3\nbdf = 2\n",
    )
    .unwrap();
    let csv = dir.path().join("ex3.csv");
    let out = evolvefem(&["run", "--config", path_arg(&cfg), "--out", path_arg(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = ErrorTable::from_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert!(table
        .rows
        .iter()
        .all(|r| r.tau == 0.05 && r.errors[5].is_some() && r.errors[0].is_none()));
}

#[test]
fn unknown_experiment_is_a_usage_error() {
    let out = evolvefem(&["run", "--experiment", "ex9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eoc_rejects_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("one.csv");
    std::fs::write(&csv, format!("{CSV_HEADER}\n1e-1,1e-3,1e-2,,,,,\n")).unwrap();
    let out = evolvefem(&["eoc", path_arg(&csv)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_detects_injected_sign_error() {
    let ok = evolvefem(&["check", "--suite", "affine"]);
    assert!(ok.status.success());
    let stdout = String::from_utf8(ok.stdout).unwrap();
    assert!(stdout.contains("suite affine: PASS"));

    let broken = evolvefem(&["check", "--suite", "affine", "--inject-a21-sign-error"]);
    assert_eq!(broken.status.code(), Some(1));
    assert!(String::from_utf8(broken.stdout).unwrap().contains("[FAIL]"));
}

#[test]
fn mesh_export_lists_nodes_and_elements() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("disk.txt");
    let coo = dir.path().join("disk");
    let out = evolvefem(&[
        "mesh",
        "--domain",
        "disk",
        "--h",
        "0.35",
        "--degree",
        "2",
        "--out",
        path_arg(&out_path),
        "--dump-matrices",
        path_arg(&coo),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.starts_with("# dim 2"));
    assert!(text.lines().any(|l| l == "nodes"));
    assert!(text.lines().any(|l| l == "elements"));
}
