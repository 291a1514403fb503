use std::path::Path;
use std::process::{Command, Output};

fn csm6lo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csm6lo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_result_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = csm6lo(&[
        "run", "--mode", "csm", "--attack", "frag1-only", "--timing", "after", "--rounds", "2",
        "--duration", "300", "--seed", "5", "--trace", "--out", path(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["rounds.csv", "summary.csv", "summary.json", "report.md", "config.toml"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let rounds = std::fs::read_to_string(dir.path().join("rounds.csv")).unwrap();
    let lines: Vec<&str> = rounds.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("frag1-only/after,csm,0,5,"));
    assert!(lines[2].starts_with("frag1-only/after,csm,1,6,"));
    let trace = dir.path().join("traces/frag1-only_after_csm_r0.csv");
    let text = std::fs::read_to_string(trace).unwrap();
    assert!(text.starts_with("time_s,node,event_kind,detail,result\n"));
}

#[test]
fn matrix_check_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = csm6lo(&["matrix", "--attack", "none", "--rounds", "3", "--duration", "400", "--check", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read(dir.path().join("summary.csv")).unwrap();
    let text = String::from_utf8(summary.clone()).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2);
    assert!(text.contains("none,vanilla,pdr,1,0\n"));
    assert!(text.contains("none,csm,pdr,1,0\n"));

    std::fs::remove_file(dir.path().join("summary.csv")).unwrap();
    let out = csm6lo(&["report", "--out", path(dir.path()), "--check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(dir.path().join("summary.csv")).unwrap(), summary);
    assert!(String::from_utf8_lossy(&out.stdout).contains("| none |"));
}

#[test]
fn same_seed_gives_identical_rounds_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = csm6lo(&["matrix", "--timing", "before", "--rounds", "2", "--duration", "300", "--seed", "77", "--out", path(d.path())]);
        assert!(out.status.success());
    }
    assert_eq!(
        std::fs::read(a.path().join("rounds.csv")).unwrap(),
        std::fs::read(b.path().join("rounds.csv")).unwrap()
    );
}

#[test]
fn check_fails_on_violated_expectation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lossy.toml");
    std::fs::write(&cfg, "rounds = 2\nduration = 400.0\n\n[topology]\nloss = 0.5\n").unwrap();
    let out = csm6lo(&["run", "--config", path(&cfg), "--attack", "none", "--check", "--out", path(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("check failed"));
}

#[test]
fn bad_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[topology]\nlinks = []\n").unwrap();
    let out = csm6lo(&["run", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid config"));

    let out = csm6lo(&["run", "--attack", "flood"]);
    assert_eq!(out.status.code(), Some(2));

    let out = csm6lo(&["report", "--out", path(&dir.path().join("missing"))]);
    assert_eq!(out.status.code(), Some(2));
}
