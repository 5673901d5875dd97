#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use hlsgen::dataset::{parse_jsonl, DesignPoint};

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn data_dir() -> PathBuf {
    repo_root().join("data")
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn demo_points() -> Vec<DesignPoint> {
    let parsed = parse_jsonl(&std::fs::read(data_dir().join("demo.jsonl")).unwrap()).unwrap();
    assert!(parsed.errors.is_empty());
    parsed.manifest.points
}

pub fn hlsgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hlsgen")).args(args).env("RUST_LOG", "error").output().expect("spawn hlsgen")
}

/// A stand-in for an OpenAI-style chat endpoint serving the demo kernels.
/// On a first prompt choice 0 is the reference, choice 1 does not compile
/// and choice 2 is the reference in a fence; once feedback is present it
/// answers with the reference.
pub struct ChatStub {
    pub url: String,
    pub requests: Arc<AtomicUsize>,
}

pub fn chat_stub() -> ChatStub {
    let points = demo_points();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let count = Arc::clone(&requests);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; len];
            if reader.read_exact(&mut body).is_err() {
                continue;
            }
            count.fetch_add(1, Ordering::SeqCst);
            let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
            let messages = req["messages"].as_array().unwrap();
            let user_turns = messages.iter().filter(|m| m["role"] == "user").count();
            let first_user = messages.iter().find(|m| m["role"] == "user").unwrap()["content"].as_str().unwrap();
            let point = points.iter().find(|p| first_user.contains(&p.description)).expect("prompt names a demo point");
            let n = req["n"].as_u64().unwrap_or(1) as usize;
            let choices: Vec<_> = (0..n)
                .map(|i| {
                    let text = match (user_turns, i % 3) {
                        (1, 1) => format!("{}\nint broken = ;\n", point.reference_source),
                        (1, 2) => format!("Here it is:\n```c\n{}```\n", point.reference_source),
                        _ => point.reference_source.clone(),
                    };
                    serde_json::json!({"index": i, "message": {"role": "assistant", "content": text}})
                })
                .collect();
            let text = serde_json::json!({"choices": choices}).to_string();
            let resp = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                text.len()
            );
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    ChatStub { url, requests }
}

/// Run config pointing the remote backend at `url`.
pub fn stub_config(dir: &Path, url: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        format!("[backend]\nendpoint = \"{url}\"\napi_key_env = \"\"\nmax_retries = 0\n\n[generation]\nn_samples = 3\n"),
    )
    .unwrap();
    path
}
