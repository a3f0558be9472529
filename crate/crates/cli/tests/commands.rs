use std::path::{Path, PathBuf};
use std::process::Command;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/e2e")
}

fn workspace() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["corpus.jsonl", "kg.json", "commonsense.json", "config.toml"] {
        std::fs::copy(fixture().join(name), tmp.path().join(name)).unwrap();
    }
    tmp
}

fn openvik(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_openvik")).args(args).env_remove("OPENVIK_GENERATOR__ALPHA").output().unwrap()
}

fn code(out: &std::process::Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn stages_run_and_honour_overrides() {
    let tmp = workspace();
    let cfg = tmp.path().join("config.toml");
    let out_dir = tmp.path().join("elsewhere");
    for stage in ["ingest", "enhance", "extract"] {
        let out = openvik(&[stage, "--config", cfg.to_str().unwrap(), "--seed", "11", "--out", out_dir.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{stage}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("manifests/extract.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert!(out_dir.join("knowledge.jsonl").exists());
}

#[test]
fn exit_codes() {
    let tmp = workspace();
    let cfg = tmp.path().join("config.toml");
    let cfg = cfg.to_str().unwrap();

    let out = openvik(&["extract", "--config", cfg]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("openvik enhance"));

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[generator]\nalpha = 1.5\n[compare]\nthreshold = 2.0\n").unwrap();
    let out = openvik(&["ingest", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("generator.alpha") && err.contains("compare.threshold"), "{err}");
    assert_eq!(code(&openvik(&["validate-config", "--config", bad.to_str().unwrap()])), 2);

    for stage in ["ingest", "enhance", "extract"] {
        assert_eq!(code(&openvik(&[stage, "--config", cfg])), 0);
    }
    std::fs::write(tmp.path().join("cassette.jsonl"), "").unwrap();
    assert_eq!(code(&openvik(&["compare-kg", "--config", cfg])), 4);
}

#[test]
fn env_overrides_config() {
    let tmp = workspace();
    let cfg = tmp.path().join("config.toml");
    let out = Command::new(env!("CARGO_BIN_EXE_openvik"))
        .args(["validate-config", "--config", cfg.to_str().unwrap()])
        .env("OPENVIK_GENERATOR__ALPHA", "0.5")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let value: toml::Value = text.parse().unwrap();
    assert_eq!(value["generator"]["alpha"].as_float(), Some(0.5));
}

#[test]
fn serve_annotation_answers_over_tcp() {
    use std::io::{BufRead, BufReader, Read, Write};
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("knowledge.jsonl");
    std::fs::write(
        &corpus,
        r#"{"phrase_id":"img1#k0","image_id":"img1","region":[0,0,5,5],"text":"man riding horse","confidence":0.9,"origin":"generated"}
"#,
    )
    .unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_openvik"))
        .args(["serve-annotation", "--port", "0", "--corpus", corpus.to_str().unwrap(), "--raters", "r1,r2"])
        .stderr(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().rsplit("http://").next().unwrap().to_string();
    let mut stream = std::net::TcpStream::connect(&addr).unwrap();
    write!(stream, "GET /api/tasks/next?rater=r2 HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains(r#""task_id":"img1:r2""#), "{response}");
}
