use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use branchstat::bundle::load_stats_bundle;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn branchstat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_branchstat"))
        .args(args)
        .env_remove("BRANCHSTAT_SEED")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&branchstat(&[])), 2);
    assert_eq!(code(&branchstat(&["bogus"])), 2);
    assert_eq!(code(&branchstat(&["analyze", "/no/such/case.csv"])), 2);
    assert_eq!(code(&branchstat(&["validate", s(&data("toy_case.csv")), "--bins", "1"])), 2);
    assert_eq!(code(&branchstat(&["--help"])), 0);
}

#[test]
fn analyze_toy_case_writes_complete_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("stats.json");
    let plots = dir.path().join("plots");
    let res = branchstat(&[
        "analyze",
        s(&data("toy_case.csv")),
        "--reference",
        "illustrative",
        "--out",
        s(&out),
        "--plots",
        s(&plots),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let bundle = load_stats_bundle(&out).unwrap();
    assert_eq!(bundle.parameters.len(), 7);
    assert_eq!(bundle.settings.seed, 42);
    assert!(fs::read_dir(&plots).unwrap().count() >= 28);

    let report = branchstat(&["report", s(&out)]);
    assert_eq!(code(&report), 0);
    assert!(String::from_utf8_lossy(&report.stdout).contains("toy_case"));
}

#[test]
fn analyze_matpower_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("stats.json");
    let res = branchstat(&["analyze", s(&data("toy_case.m")), "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let bundle = load_stats_bundle(&out).unwrap();
    assert_eq!(bundle.case_name, "toy_case");
}

#[test]
fn validate_exit_codes() {
    let case = data("toy_case.csv");
    let ok = branchstat(&["validate", s(&case), "--reference", "illustrative"]);
    assert_eq!(code(&ok), 0);
    let table = String::from_utf8_lossy(&ok.stdout);
    assert!(table.starts_with("Parameter\tSynthetic Grid Models\n\ttoy_case\n"));

    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.md");
    let strict = branchstat(&[
        "validate",
        s(&case),
        "--reference",
        "illustrative",
        "--ratio-lo",
        "0.99",
        "--ratio-hi",
        "1.001",
        "--out",
        s(&report),
    ]);
    assert_eq!(code(&strict), 1);
    assert!(fs::read_to_string(&report).unwrap().contains("TR"));
}

#[test]
fn tune_with_placeholder_reference_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tuned.csv");
    let res = branchstat(&[
        "tune",
        s(&data("toy_case.csv")),
        "--params",
        "line_length_km",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 4);
    assert!(!out.exists());
}

#[test]
fn tune_without_failures_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tuned.csv");
    let res = branchstat(&["tune", s(&data("toy_case.csv")), "--reference", "illustrative", "--out", s(&out)]);
    assert_eq!(code(&res), 0);
    assert!(String::from_utf8_lossy(&res.stdout).contains("nothing to tune"));
    assert!(!out.exists());
}

#[test]
fn tune_requested_parameter_writes_case_and_plan() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tuned.csv");
    let res = branchstat(&[
        "tune",
        s(&data("toy_case.csv")),
        "--reference",
        "illustrative",
        "--params",
        "line_x_over_r",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let plan = fs::read_to_string(dir.path().join("tuned.plan.csv")).unwrap();
    assert!(plan.starts_with("branch_id,parameter,old,new,class_kv\n"));
    assert_eq!(plan.lines().count(), 361);
    let after = branchstat(&["validate", s(&out), "--reference", "illustrative"]);
    assert_eq!(code(&after), 0);
}

#[test]
fn synth_follows_seed_and_env() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    assert_eq!(code(&branchstat(&["synth", "--per-class", "20", "--out", s(&a)])), 0);
    let env_seeded = Command::new(env!("CARGO_BIN_EXE_branchstat"))
        .args(["synth", "--per-class", "20", "--out", s(&b)])
        .env("BRANCHSTAT_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(code(&env_seeded), 0);
    assert_eq!(code(&branchstat(&["synth", "--per-class", "20", "--seed", "7", "--out", s(&c)])), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn bundled_toy_case_matches_synth_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("toy_case.csv");
    assert_eq!(code(&branchstat(&["synth", "--out", s(&out)])), 0);
    assert_eq!(fs::read(&out).unwrap(), fs::read(data("toy_case.csv")).unwrap());
}
