use std::path::Path;
use std::process::{Command, Output};

use pcep::sim::{read_csv, CSV_COLUMNS};
use pcep::structure::CodeStructure;

fn pcep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcep"))
        .args(args)
        .env_remove("PCEP_THREADS")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn construct_writes_loadable_structure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("structure.json");
    let run = pcep(&[
        "construct",
        "--p",
        "0.02",
        "--n-exp",
        "6",
        "--mu",
        "32",
        "--out",
        path_str(&out),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let s = CodeStructure::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!((s.n_exp, s.p_m, s.mu), (6, 0.02, 32));
    assert_eq!(s.set_r.len() + s.set_a.len() + s.set_b.len(), 64);
}

#[test]
fn construct_reuses_cache_file() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("tables.bin");
    let first = pcep(&[
        "construct",
        "--p",
        "0.03",
        "--n-exp",
        "6",
        "--mu",
        "16",
        "--cache",
        path_str(&cache),
    ]);
    assert!(first.status.success());
    let size = std::fs::metadata(&cache).unwrap().len();
    let second = pcep(&[
        "construct",
        "--p",
        "0.03",
        "--n-exp",
        "6",
        "--mu",
        "16",
        "--cache",
        path_str(&cache),
    ]);
    assert!(second.status.success());
    assert_eq!(std::fs::metadata(&cache).unwrap().len(), size);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn sim_without_timing_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let run = pcep(&[
            "sim",
            "--n-exp",
            "5",
            "--p",
            "0.01,0.03",
            "--trials",
            "50",
            "--mu",
            "16",
            "--seed",
            "9",
            "--no-timing",
            "--out",
            path_str(out),
        ]);
        assert!(
            run.status.success(),
            "{}",
            String::from_utf8_lossy(&run.stderr)
        );
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
    let report = read_csv(text.as_bytes()).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert!(report
        .rows
        .iter()
        .all(|r| r.trials == 50 && r.seconds == 0.0));
}

#[test]
fn sim_json_to_stdout_reports_skipped_cells() {
    let run = pcep(&[
        "sim", "--n-exp", "4", "--p", "0.02,0.3", "--trials", "5", "--mu", "8", "--format", "json",
    ]);
    assert!(run.status.success());
    let v: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 1);
    assert_eq!(v["skipped"][0]["p_m"], 0.3);
}

#[test]
fn rate_prints_table() {
    let run = pcep(&[
        "rate",
        "--p-grid",
        "0.01,0.05",
        "--n-exp",
        "6",
        "--mu",
        "16",
    ]);
    assert!(run.status.success());
    let text = String::from_utf8(run.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("n_exp,p_m,p_w,rate,c_sec,rate_over_csec"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn config_errors_exit_with_2() {
    for args in [
        &["sim", "--trials", "0", "--n-exp", "5"][..],
        &["sim", "--n-exp", "3"],
        &["sim", "--p", "0.7", "--n-exp", "5"],
        &["construct", "--p", "0.2", "--n-exp", "5"],
        &["construct", "--p", "0.02", "--n-exp", "5", "--mu", "3"],
        &["sim", "--format", "xml"],
    ] {
        let run = pcep(args);
        assert_eq!(run.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn bad_thread_cap_is_a_config_error() {
    let run = Command::new(env!("CARGO_BIN_EXE_pcep"))
        .args(["rate", "--n-exp", "4"])
        .env("PCEP_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn io_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no/such/dir/out.csv");
    let run = pcep(&[
        "sim",
        "--n-exp",
        "4",
        "--p",
        "0.02",
        "--trials",
        "2",
        "--mu",
        "8",
        "--out",
        path_str(&missing),
    ]);
    assert_eq!(run.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&run.stderr).contains("out.csv"));

    let corrupt = dir.path().join("corrupt.bin");
    std::fs::write(&corrupt, b"not a cache").unwrap();
    let run = pcep(&[
        "construct",
        "--p",
        "0.02",
        "--n-exp",
        "4",
        "--cache",
        path_str(&corrupt),
    ]);
    assert_eq!(run.status.code(), Some(3));
}
