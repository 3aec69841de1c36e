use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use std::process::{Command, Stdio};

use serde_json::Value;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn ainsight() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ainsight"));
    cmd.env("RUST_LOG", "warn")
        .env_remove("AINSIGHT_PROVIDER_MODE");
    cmd
}

fn read_json(path: &std::path::Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn replay_with_bundled_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("metrics.json");
    let status = ainsight()
        .args(["replay", "--speed", "1", "--clock", "sim", "--script"])
        .arg(fixtures().join("scripts/lower_back_pain.json"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let m = read_json(&out);
    assert_eq!(m["totals"]["ticks"], 6);
    assert_eq!(m["totals"]["insights"], 7);
    assert_eq!(m["clock"], "sim");
}

#[test]
fn ingest_then_replay_from_index() {
    let dir = tempfile::tempdir().unwrap();
    let index = dir.path().join("index");
    let output = ainsight()
        .args(["ingest", "--kb"])
        .arg(fixtures().join("kb"))
        .arg("--index")
        .arg(&index)
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).contains("13 chunks from 11 sources"));
    assert!(index.join("index.jsonl").is_file());
    assert!(index.join("manifest.json").is_file());

    let out = dir.path().join("m.json");
    let status = ainsight()
        .args(["replay", "--script"])
        .arg(fixtures().join("scripts/medication_review.json"))
        .arg("--index")
        .arg(&index)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(read_json(&out)["totals"]["insights"], 1);
}

#[test]
fn bad_arguments_fail() {
    let dir = tempfile::tempdir().unwrap();
    let script = fixtures().join("scripts/span_10s.json");
    let bad_clock = ainsight()
        .args(["replay", "--clock", "lunar", "--out", "x.json", "--script"])
        .arg(&script)
        .output()
        .unwrap();
    assert_eq!(bad_clock.status.code(), Some(2));

    let zero_speed = ainsight()
        .args(["replay", "--speed", "0", "--script"])
        .arg(&script)
        .arg("--out")
        .arg(dir.path().join("m.json"))
        .output()
        .unwrap();
    assert_eq!(zero_speed.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&zero_speed.stderr).contains("speed"));

    let missing = ainsight()
        .args([
            "replay",
            "--script",
            "/nonexistent/script.json",
            "--out",
            "m.json",
        ])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn serve_answers_health() {
    let dir = tempfile::tempdir().unwrap();
    let index = dir.path().join("index");
    assert!(ainsight()
        .args(["ingest", "--kb"])
        .arg(fixtures().join("kb"))
        .arg("--index")
        .arg(&index)
        .status()
        .unwrap()
        .success());
    let mut child = ainsight()
        .args(["serve", "--listen", "127.0.0.1:0", "--index"])
        .arg(&index)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .unwrap()
        .to_string();
    let health: Value = ureq::get(&format!("http://{addr}/health"))
        .call()
        .unwrap()
        .body_mut()
        .read_json()
        .unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(health["status"], "ok");
    assert_eq!(health["index_size"], 13);
}
