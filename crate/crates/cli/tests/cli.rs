//! End-to-end tests against the compiled `evacsim` binary: exit codes,
//! artifact layout, and byte-level determinism of repeated runs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn evacsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_evacsim"))
}

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(rel)
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn validate_accepts_known_good_fixtures() {
    for (kind, rel) in [
        ("scenario", "scenarios/severe_small.toml"),
        ("scenario", "scenarios/bomb_small.toml"),
        ("matrix", "scenarios/matrix_small.toml"),
        ("script", "commsim/rumor_script.toml"),
    ] {
        let out = evacsim().args(["validate", kind]).arg(fixture(rel)).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{rel}: {}", stderr(&out));
        assert!(stdout(&out).starts_with("OK:"), "{rel}: {}", stdout(&out));
    }
}

#[test]
fn validate_rejects_inconsistent_scenario_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    // Bomb threats require a threat rectangle; this one has none.
    std::fs::write(
        &path,
        r#"
version = 1
name = "broken"
emergency_type = "bomb_threat"
announcement = "Evacuate."
seed = 1

[population]
target_students = 8
"#,
    )
    .unwrap();
    let out = evacsim().args(["validate", "scenario"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("validation"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_with_64() {
    let out = evacsim().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(64));
    let out = evacsim().args(["run", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn unknown_policy_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = evacsim()
        .args(["run", "--policy", "bogus", "--scenario"])
        .arg(fixture("scenarios/severe_small.toml"))
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("unknown policy"), "{}", stderr(&out));
}

#[test]
fn gen_population_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let out = evacsim()
            .args(["gen-population", "--target-students", "8", "--seed", "3", "--out"])
            .arg(path)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    let bytes_a = std::fs::read(&a).unwrap();
    assert!(!bytes_a.is_empty());
    assert_eq!(bytes_a, std::fs::read(&b).unwrap());

    let out = evacsim().args(["validate", "population"]).arg(&a).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn run_artifacts_are_complete_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    for out_dir in [&first, &second] {
        let out = evacsim()
            .args(["run", "--scenario"])
            .arg(fixture("scenarios/severe_small.toml"))
            .arg("--out")
            .arg(out_dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        let text = stdout(&out);
        assert!(text.contains("termination: all_exited"), "{text}");
        assert!(text.contains("evacuation 80%: round "), "{text}");
    }

    for name in ["rounds.jsonl", "result.json", "replay.json", "snapshot_final.json", "manifest.json"]
    {
        assert!(first.join(name).is_file(), "missing {name}");
        assert_eq!(
            std::fs::read(first.join(name)).unwrap(),
            std::fs::read(second.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }

    // Manifest hashes must match the artifacts they describe.
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(first.join("manifest.json")).unwrap())
            .unwrap();
    let rounds = std::fs::read(first.join("rounds.jsonl")).unwrap();
    let digest: String = Sha256::digest(&rounds).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(
        manifest["artifacts"]["rounds.jsonl"]["sha256"].as_str().unwrap(),
        digest
    );
    assert_eq!(
        manifest["artifacts"]["rounds.jsonl"]["bytes"].as_u64().unwrap(),
        rounds.len() as u64
    );

    // The computed metrics are recoverable from the saved log alone.
    let out = evacsim()
        .args(["metrics", "--fraction", "0.5", "--fraction", "0.8", "--log"])
        .arg(first.join("rounds.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("evacuation 50%: round "), "{text}");
    assert!(text.contains("evacuation 80%: round "), "{text}");
}

#[test]
fn matrix_report_is_independent_of_job_count() {
    let dir = tempfile::tempdir().unwrap();
    let parallel = dir.path().join("parallel");
    let serial = dir.path().join("serial");
    for (out_dir, jobs) in [(&parallel, "2"), (&serial, "1")] {
        let out = evacsim()
            .args(["matrix", "--jobs", jobs, "--matrix"])
            .arg(fixture("scenarios/matrix_small.toml"))
            .arg("--out")
            .arg(out_dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        assert!(stdout(&out).contains("cells: 4 (2 variants x 2 repetitions), 0 failed"));
    }
    assert_eq!(
        std::fs::read(parallel.join("report.json")).unwrap(),
        std::fs::read(serial.join("report.json")).unwrap(),
        "report depends on worker scheduling"
    );
    let csv = std::fs::read_to_string(parallel.join("report.csv")).unwrap();
    assert!(csv.starts_with("variant,repetition,seed,rounds,termination"), "{csv}");
    assert_eq!(csv.lines().count(), 5, "header + 4 cells");
}

#[test]
fn replay_export_produces_versioned_replay() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("replay.json");
    let out = evacsim()
        .args(["replay-export", "--max-rounds", "20", "--scenario"])
        .arg(fixture("scenarios/severe_small.toml"))
        .arg("--out")
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let replay: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(replay["version"], 1);
    assert_eq!(replay["rounds"].as_array().unwrap().len(), 20);
}

#[test]
fn commsim_misinterpret_scores_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    let messages = dir.path().join("messages.txt");
    std::fs::write(&messages, "the park closes early today\nboil-water advisory lifted\n")
        .unwrap();
    let out = evacsim()
        .args(["commsim-misinterpret", "--agents", "5", "--messages"])
        .arg(&messages)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let records: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(records.as_array().unwrap().len(), 10);
}

#[test]
fn commsim_propagate_is_deterministic_and_moderated() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let out = evacsim()
            .args([
                "commsim-propagate",
                "--agents",
                "10",
                "--policy",
                "spread-on:water",
                "--moderated",
                "--seed",
                "9",
                "--script",
            ])
            .arg(fixture("commsim/rumor_script.toml"))
            .arg("--out")
            .arg(path)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    let text_a = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text_a, std::fs::read_to_string(&b).unwrap());
    assert!(
        text_a.contains("WARNING: This piece of content might contain misinformation"),
        "moderated run must carry the warning prefix"
    );
}
