//! End-to-end checks of the command-line front end: exit-code contract,
//! report shapes, merging, and byte-level determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn gma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gma"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_verify(cfg: &str, out: &Path) -> Output {
    gma(&["verify", "--config", &fixture(cfg).to_string_lossy(), "--out", &out.to_string_lossy()])
}

#[test]
fn verify_scaling_all_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_verify("scaling2.json", dir.path());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).filter(|l| !l.is_empty()).collect();
    assert_eq!(rows.len(), 11, "expected 11 check rows:\n{csv}");
    for row in &rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[6], "true", "failing row: {row}");
        if cols[1] == "identity" {
            let resid: f64 = cols[4].parse().unwrap();
            assert!(resid < 1e-8, "identity residual {resid} in {row}");
        }
    }
    // sorted by name
    let mut names: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    let sorted = {
        let mut s = names.clone();
        s.sort();
        s
    };
    assert_eq!(names, sorted);
    names.dedup();
    assert_eq!(names.len(), 11);
}

#[test]
fn verify_identity_density_is_tight() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_verify("ones1d.json", dir.path());
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    for row in csv.lines().skip(1).filter(|l| !l.is_empty()) {
        let cols: Vec<&str> = row.split(',').collect();
        let value: f64 = cols[4].parse().unwrap();
        assert!(value.abs() <= 1e-10, "residual/slack {value} in {row}");
    }
}

#[test]
fn exit_codes() {
    // unknown family: config error
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"schema_version":1,"density":{"family":"foo","a":[1.0]}}"#).unwrap();
    let out = gma(&["verify", "--config", &bad.to_string_lossy(), "--out", &dir.path().to_string_lossy()]);
    assert_eq!(out.status.code(), Some(2));

    // missing config file
    let out = gma(&["verify", "--config", "/nonexistent/x.json", "--out", &dir.path().to_string_lossy()]);
    assert_eq!(out.status.code(), Some(2));

    // unknown check name
    let bad2 = dir.path().join("bad2.json");
    std::fs::write(
        &bad2,
        r#"{"schema_version":1,"density":{"family":"scaling","sigmas":[2.0]},"checks":["nope"]}"#,
    )
    .unwrap();
    let out = gma(&["verify", "--config", &bad2.to_string_lossy(), "--out", &dir.path().to_string_lossy()]);
    assert_eq!(out.status.code(), Some(2));

    // out-of-window parameter
    let bad3 = dir.path().join("bad3.json");
    std::fs::write(
        &bad3,
        r#"{"schema_version":1,"density":{"family":"scaling","sigmas":[9.0]}}"#,
    )
    .unwrap();
    let out = gma(&["verify", "--config", &bad3.to_string_lossy(), "--out", &dir.path().to_string_lossy()]);
    assert_eq!(out.status.code(), Some(2));

    // truncation on a 1D density: a study needs at least two levels
    let one = dir.path().join("one.json");
    std::fs::write(&one, r#"{"schema_version":1,"density":{"family":"shift","a":[1.0]}}"#).unwrap();
    let out = gma(&["truncation", "--config", &one.to_string_lossy(), "--out", &dir.path().to_string_lossy()]);
    assert_eq!(out.status.code(), Some(2));

    // report with no inputs
    let out = gma(&["report", "--out", &dir.path().to_string_lossy()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn truncation_shift_levels() {
    let dir = tempfile::tempdir().unwrap();
    let out = gma(&[
        "truncation",
        "--config",
        &fixture("trunc_shift.json").to_string_lossy(),
        "--out",
        &dir.path().to_string_lossy(),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("truncation_levels.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,entropy,fisher,talagrand_slack,p210_slack,L_weighted,contraction_slacks"
    );
    let want = [0.5, 0.625, 0.65625];
    for (line, want_ent) in lines.zip(want) {
        let ent: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((ent - want_ent).abs() < 1e-9, "entropy {ent} vs {want_ent}");
    }
}

#[test]
fn truncation_product_mixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = gma(&[
        "truncation",
        "--config",
        &fixture("trunc_mixture.json").to_string_lossy(),
        "--out",
        &dir.path().to_string_lossy(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("truncation.csv")).unwrap();
    let contraction = csv
        .lines()
        .find(|l| l.starts_with("contraction_m1_n2"))
        .expect("contraction row");
    let slack: f64 = contraction.split(',').nth(4).unwrap().parse().unwrap();
    assert!(slack >= -1e-5, "contraction slack {slack}");
}

#[test]
fn report_merges_and_is_idempotent() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    assert!(run_verify("scaling2.json", d1.path()).status.success());
    let tr = gma(&[
        "truncation",
        "--config",
        &fixture("trunc_shift.json").to_string_lossy(),
        "--out",
        &d2.path().to_string_lossy(),
    ]);
    assert!(tr.status.success());

    let v = d1.path().join("verify.jsonl");
    let t = d2.path().join("truncation.jsonl");
    let rep = tempfile::tempdir().unwrap();
    let out1 = gma(&[
        "report",
        &v.to_string_lossy(),
        &t.to_string_lossy(),
        "--out",
        &rep.path().to_string_lossy(),
    ]);
    assert!(out1.status.success());
    let merged = std::fs::read_to_string(rep.path().join("merged.csv")).unwrap();
    assert!(merged.contains("talagrand"));
    assert!(merged.contains("contraction_m1_n2"));
    let first = std::fs::read(rep.path().join("summary.txt")).unwrap();

    // idempotent on rerun
    let out2 = gma(&[
        "report",
        &v.to_string_lossy(),
        &t.to_string_lossy(),
        "--out",
        &rep.path().to_string_lossy(),
    ]);
    assert!(out2.status.success());
    assert_eq!(first, std::fs::read(rep.path().join("summary.txt")).unwrap());

    // duplicate names across inputs get the source suffix
    let rep2 = tempfile::tempdir().unwrap();
    let out3 = gma(&[
        "report",
        &v.to_string_lossy(),
        &v.to_string_lossy(),
        "--out",
        &rep2.path().to_string_lossy(),
    ]);
    assert!(out3.status.success());
    let merged2 = std::fs::read_to_string(rep2.path().join("merged.csv")).unwrap();
    assert!(
        merged2.lines().any(|l| l.starts_with("talagrand (")),
        "expected suffixed duplicates:\n{merged2}"
    );
}

#[test]
fn jobs_flag_does_not_change_bytes() {
    let serial = tempfile::tempdir().unwrap();
    let par = tempfile::tempdir().unwrap();
    let cfg = fixture("gauss2d.json");
    let a = gma(&["verify", "--config", &cfg.to_string_lossy(), "--out", &serial.path().to_string_lossy(), "--jobs", "1"]);
    let b = gma(&["verify", "--config", &cfg.to_string_lossy(), "--out", &par.path().to_string_lossy(), "--jobs", "2"]);
    assert!(a.status.success() && b.status.success());
    let ca = std::fs::read(serial.path().join("verify.csv")).unwrap();
    let cb = std::fs::read(par.path().join("verify.csv")).unwrap();
    assert_eq!(ca, cb);
}
