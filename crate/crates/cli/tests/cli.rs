//! Black-box tests of the `vpanel` binary: exit codes, artifact
//! output, and machine-parseable error lines.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_vpanel")
}

fn demo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/demo/config.toml")
}

fn run(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn unknown_subcommand_exits_2_with_usage() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "{stderr}");
}

#[test]
fn help_is_available_on_every_subcommand() {
    for sub in [
        "generate",
        "profile",
        "match",
        "run-survey",
        "evaluate",
        "lower-bound",
        "pipeline",
    ] {
        let out = run(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub} --help failed");
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(stdout.contains("--config"), "{sub} help missing --config");
    }
}

#[test]
fn match_subcommand_writes_matching_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "match",
        "--config",
        demo_config().to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--method",
        "greedy",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("matching.json").is_file());
    assert!(dir.path().join("anthology.jsonl").is_file());
    assert!(dir.path().join("personas.jsonl").is_file());
    assert!(!dir.path().join("responses.csv").exists());
}

#[test]
fn pipeline_subcommand_produces_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "pipeline",
        "--config",
        demo_config().to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for artifact in [
        "anthology.jsonl",
        "personas.jsonl",
        "matching.json",
        "responses.csv",
        "report.json",
        "report.csv",
        "manifest.json",
    ] {
        assert!(dir.path().join(artifact).is_file(), "missing {artifact}");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("avg_wd="), "{stdout}");
}

#[test]
fn seed_override_changes_artifacts() {
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    let config = demo_config();
    for (dir, seed) in [(&dir1, "42"), (&dir2, "43")] {
        let out = run(&[
            "run-survey",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let a = std::fs::read(dir1.path().join("responses.csv")).unwrap();
    let b = std::fs::read(dir2.path().join("responses.csv")).unwrap();
    assert_ne!(a, b, "different master seeds must change responses");
}

#[test]
fn evaluate_mismatched_questions_exits_1_naming_them() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("responses.csv"),
        "respondent_id,wrong_a,wrong_b\nh001,0,1\nh002,1,0\n",
    )
    .unwrap();
    let out = run(&[
        "evaluate",
        "--config",
        demo_config().to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("error[question_set_mismatch]"),
        "machine-parseable code expected: {stderr}"
    );
    assert!(stderr.contains("soc_remote_work"), "{stderr}");
}

#[test]
fn lower_bound_subcommand_writes_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "lower-bound",
        "--config",
        demo_config().to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--iterations",
        "25",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("lower_bound.json").is_file());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("25 iterations"), "{stdout}");
}

#[test]
fn missing_config_file_exits_1_with_code() {
    let out = run(&["pipeline", "--config", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error["), "{stderr}");
}
