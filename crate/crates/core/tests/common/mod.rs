#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;

use kbprobe_core::RunConfig;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// A config over the fixture KB with a mock model, written into `dir`.
pub fn config_text(kb: &str, extra: &str, model: &str) -> String {
    format!(
        "kb = {:?}\nschema = {:?}\npool = {:?}\noutput_dir = \"out\"\nparallelism = 3\n{extra}\n[model]\n{model}\n",
        fixture(kb).display().to_string(),
        fixture("schema.tsv").display().to_string(),
        fixture("prototypes.tsv").display().to_string(),
    )
}

pub fn write_config(dir: &Path, text: &str) -> RunConfig {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    RunConfig::load(&path).unwrap()
}

pub fn mock_config(dir: &Path, extra: &str, mock: &str) -> RunConfig {
    write_config(dir, &config_text("mini_kb.tsv", extra, &format!("mock = {mock:?}")))
}

/// Every file under the output directory except the cache, with contents.
pub fn snapshot(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![out.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                if path.file_name().unwrap() != "cache" {
                    stack.push(path);
                }
            } else {
                let rel = path.strip_prefix(out).unwrap().display().to_string();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

pub type Handler = dyn Fn(usize, &serde_json::Value) -> (u16, String) + Send + Sync;

/// Minimal chat-completions server on a loopback port. The handler gets the
/// zero-based request number and the decoded JSON body.
pub struct StubServer {
    pub base_url: String,
    pub bodies: Arc<Mutex<Vec<serde_json::Value>>>,
}

pub fn reply_json(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

impl StubServer {
    pub fn start(handler: Box<Handler>) -> StubServer {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}/v1", listener.local_addr().unwrap());
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let seen = bodies.clone();
        let handler: Arc<Handler> = Arc::from(handler);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let seen = seen.clone();
                let handler = handler.clone();
                thread::spawn(move || {
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut request_line = String::new();
                    if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
                        return;
                    }
                    let mut length = 0usize;
                    loop {
                        let mut line = String::new();
                        reader.read_line(&mut line).unwrap();
                        let line = line.trim_end();
                        if line.is_empty() {
                            break;
                        }
                        if let Some((name, value)) = line.split_once(':') {
                            if name.eq_ignore_ascii_case("content-length") {
                                length = value.trim().parse().unwrap();
                            }
                        }
                    }
                    let mut body = vec![0; length];
                    reader.read_exact(&mut body).unwrap();
                    let (status, text) = if request_line.starts_with("POST") {
                        let json: serde_json::Value = serde_json::from_slice(&body).unwrap();
                        let n = {
                            let mut guard = seen.lock().unwrap();
                            guard.push(json.clone());
                            guard.len() - 1
                        };
                        handler(n, &json)
                    } else {
                        (200, "ok".to_string())
                    };
                    let response = format!(
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                        text.len()
                    );
                    let _ = stream.write_all(response.as_bytes());
                });
            }
        });
        StubServer { base_url, bodies }
    }

    pub fn requests(&self) -> usize {
        self.bodies.lock().unwrap().len()
    }

    pub fn prompts(&self) -> Vec<String> {
        self.bodies
            .lock()
            .unwrap()
            .iter()
            .map(|b| b["messages"][0]["content"].as_str().unwrap().to_string())
            .collect()
    }
}

/// Endpoint table for a stub server with fast retries.
pub fn endpoint_toml(section: &str, base_url: &str, model: &str) -> String {
    format!(
        "[{section}]\nbase_url = {base_url:?}\nmodel = {model:?}\nmax_retries = 3\ninitial_backoff_ms = 5\nmax_backoff_ms = 20\ntimeout_secs = 10\n"
    )
}
