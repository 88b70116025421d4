use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use notana_service::demo::Example;
use serde_json::Value;

fn notana() -> Command {
    Command::new(env!("CARGO_BIN_EXE_notana"))
}

fn write_inputs(dir: &Path) {
    std::fs::write(dir.join("drawing.png"), Example::Run.drawing().encode_png().unwrap()).unwrap();
    std::fs::write(dir.join("notes.png"), Example::Run.notation().encode_png().unwrap()).unwrap();
}

#[test]
fn replay_without_cassette_exits_1_with_structured_error() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let out = notana()
        .current_dir(dir.path())
        .args(["infer", "--drawing", "drawing.png", "--notations", "notes.png", "--backend", "replay"])
        .args(["--cassette-dir", "empty-cassettes"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "cassette_miss");
    assert!(err["details"]["request_digest"].as_str().is_some_and(|d| d.len() == 64));
    assert!(!dir.path().join("result.json").exists());
}

#[test]
fn mock_infer_writes_result_json() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let out = notana()
        .current_dir(dir.path())
        .args(["infer", "--drawing", "drawing.png", "--notations", "notes.png", "--out", "r.json"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&std::fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(v["units"].as_array().unwrap().len(), 2);
    assert_eq!(v["global_timeline"][0], "body_run");
}

#[test]
fn missing_input_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = notana()
        .current_dir(dir.path())
        .args(["infer", "--drawing", "nope.png", "--notations", "nope.png"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["code"].is_string());
}

#[test]
fn demo_then_generate_reuses_frames() {
    let dir = tempfile::tempdir().unwrap();
    let out = notana()
        .current_dir(dir.path())
        .args(["demo", "--example", "splash", "--out", "d"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&std::fs::read(dir.path().join("d/result.json")).unwrap()).unwrap();
    assert_eq!(report["chain_verified"], true);
    assert_eq!(report["frames"].as_array().unwrap().len(), 3);
    for i in 0..3 {
        assert!(dir.path().join(format!("d/frame_{i}.png")).exists());
    }

    let out = notana()
        .current_dir(dir.path())
        .args(["generate", "--workspace-dir", "d/workspaces/splash", "--mock-example", "splash"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let frames: Value = serde_json::from_slice(&out.stdout).unwrap();
    let ids: Vec<&Value> = frames.as_array().unwrap().iter().map(|f| &f["frame_id"]).collect();
    let expected: Vec<&Value> = report["frames"].as_array().unwrap().iter().map(|f| &f["frame_id"]).collect();
    assert_eq!(ids, expected);
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    s.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut buf = String::new();
    s.read_to_string(&mut buf).ok()?;
    Some(buf)
}

#[test]
fn serve_without_backends_reports_degraded_health() {
    let dir = tempfile::tempdir().unwrap();
    let port = free_port();
    let mut child = notana()
        .args(["serve", "--port", &port.to_string(), "--data-dir"])
        .arg(dir.path())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let reply = loop {
        if let Some(r) = http_get(port, "/health") {
            break r;
        }
        assert!(Instant::now() < deadline, "server never came up");
        std::thread::sleep(Duration::from_millis(50));
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
    let body = reply.split("\r\n\r\n").nth(1).unwrap();
    let v: Value = serde_json::from_str(body).unwrap();
    assert_eq!(v["degraded"], true);
}
