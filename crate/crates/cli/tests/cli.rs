use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn helmsman(args: &[&str], data: &TempDir) -> Output {
    Command::new(env!("CARGO_BIN_EXE_helmsman"))
        .args(args)
        .arg("--data-dir")
        .arg(data.path())
        .env_remove("HELMSMAN_PORT")
        .output()
        .expect("binary runs")
}

fn script(dir: &TempDir, body: &str) -> String {
    let path = dir.path().join("case.script");
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

fn config() -> String {
    fixtures().join("platform.json").display().to_string()
}

#[test]
fn fixture_session_passes() {
    let data = tempfile::tempdir().unwrap();
    let session = fixtures()
        .join("scripts/session.script")
        .display()
        .to_string();
    let out = helmsman(&["--config", &config(), "--script", &session], &data);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{stdout}\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout.contains("script ok"), "{stdout}");
    // state went to the data dir, not next to the config
    assert!(data.path().join("users.json").exists());
}

#[test]
fn failed_expectation_exits_one_with_a_diff() {
    let data = tempfile::tempdir().unwrap();
    let body = r#"send {"op": "call_service", "service": "/ui/login", "id": "l", "args": {"username": "admin", "password": "admin-pass"}}
await {"op": "service_response", "id": "l", "result": true, "values": {"role": "operator"}}
"#;
    let path = script(&data, body);
    let out = helmsman(&["--config", &config(), "--script", &path], &data);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "{stderr}");
    assert!(
        stderr.contains("operator") && stderr.contains("administrator"),
        "{stderr}"
    );
}

#[test]
fn empty_script_succeeds() {
    let data = tempfile::tempdir().unwrap();
    let path = script(&data, "# nothing to do\n");
    let out = helmsman(&["--config", &config(), "--script", &path], &data);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn malformed_config_exits_two() {
    let data = tempfile::tempdir().unwrap();
    let bad = data.path().join("bad.json");
    std::fs::write(&bad, r#"{"bridge": {"port": "ninety"}}"#).unwrap();
    let out = helmsman(&["--config", &bad.display().to_string()], &data);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bridge.port"), "{stderr}");

    let path = script(&data, "fly away\n");
    let out = helmsman(&["--config", &config(), "--script", &path], &data);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn serves_until_killed() {
    let data = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_helmsman"))
        .args([
            "--config",
            &config(),
            "--port",
            "0",
            "--host",
            "127.0.0.1",
            "--data-dir",
        ])
        .arg(data.path())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(
        line.starts_with("helmsman ready on ws://127.0.0.1:"),
        "{line}"
    );
    assert!(line.contains("features=security,launchers"), "{line}");
    let port: u16 = line
        .split(':')
        .nth(2)
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert_ne!(port, 0);
}
