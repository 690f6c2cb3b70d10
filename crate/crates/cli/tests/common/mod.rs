#![allow(dead_code)]

use serde_json::{json, Value};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_protoagent")
}

pub fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

pub fn fixture(rel: &str) -> PathBuf {
    repo().join("fixtures").join(rel)
}

/// Runs the binary with a clean environment for the config variable.
pub fn run(args: &[&str], stdin: Option<&str>) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args)
        .env_remove("PROTOAGENT_CONFIG")
        .env("RUST_LOG", "error")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    let mut child = cmd.spawn().unwrap();
    let mut pipe = child.stdin.take().unwrap();
    if let Some(input) = stdin {
        pipe.write_all(input.as_bytes()).unwrap();
    }
    drop(pipe);
    child.wait_with_output().unwrap()
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn mock_config(dir: &Path, script: &Path) -> PathBuf {
    let path = dir.join("llm.json");
    std::fs::write(
        &path,
        json!({ "backend": "mock", "script": script }).to_string(),
    )
    .unwrap();
    path
}

/// Request of a scenario or eval case directory.
pub enum Request {
    Text(String),
    Json(PathBuf),
}

impl Request {
    pub fn of(dir: &Path) -> Self {
        if dir.join("request.json").exists() {
            Request::Json(dir.join("request.json"))
        } else {
            Request::Text(
                std::fs::read_to_string(dir.join("request.txt"))
                    .unwrap()
                    .trim()
                    .to_string(),
            )
        }
    }

    pub fn flags(&self) -> Vec<String> {
        match self {
            Request::Text(t) => vec!["--request".into(), t.clone()],
            Request::Json(p) => vec!["--request-json".into(), p.display().to_string()],
        }
    }

    pub fn body(&self) -> String {
        match self {
            Request::Text(t) => json!({ "text": t }).to_string(),
            Request::Json(p) => std::fs::read_to_string(p).unwrap(),
        }
    }
}

/// `protoagent apply --yes`; the written protocol when there is one.
pub fn cli_apply(
    protocol: &Path,
    request: &Request,
    script: &Path,
    out: &Path,
) -> (i32, Option<String>) {
    let mut args: Vec<String> = vec!["apply".into(), protocol.display().to_string()];
    args.extend(request.flags());
    args.extend([
        "--yes".into(),
        "--out".into(),
        out.display().to_string(),
        "--script".into(),
        script.display().to_string(),
    ]);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let output = run(&refs, None);
    (code(&output), std::fs::read_to_string(out).ok())
}

/// A `protoagent serve` child process on a free port; killed on drop.
pub struct Server {
    child: Child,
    pub base: String,
    pub http: reqwest::blocking::Client,
}

impl Server {
    pub fn start(config: &Path, store: &Path) -> Server {
        let mut child = Command::new(bin())
            .args(["serve", "--port", "0", "--store-dir"])
            .arg(store)
            .arg("--config")
            .arg(config)
            .env("RUST_LOG", "error")
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let base = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected startup line: {line:?}"))
            .to_string();
        Server {
            child,
            base,
            http: reqwest::blocking::Client::new(),
        }
    }

    pub fn post(&self, path: &str, body: impl Into<String>) -> (u16, String) {
        let r = self
            .http
            .post(format!("{}{path}", self.base))
            .body(body.into())
            .send()
            .unwrap();
        (r.status().as_u16(), r.text().unwrap())
    }

    pub fn get(&self, path: &str) -> (u16, String) {
        let r = self
            .http
            .get(format!("{}{path}", self.base))
            .send()
            .unwrap();
        (r.status().as_u16(), r.text().unwrap())
    }

    pub fn create(&self, xml: &str) -> String {
        let (status, body) = self.post("/sessions", xml);
        assert_eq!(status, 201, "{body}");
        json_of(&body)["id"].as_str().unwrap().to_string()
    }

    /// Submits and approves every pending proposal in order, like
    /// `apply --yes`. Returns the final protocol when all were applied.
    pub fn apply_all(&self, xml: &str, request: &Request) -> Option<String> {
        let id = self.create(xml);
        let (status, body) = self.post(&format!("/sessions/{id}/requests"), request.body());
        assert_eq!(status, 200, "{body}");
        let proposals = json_of(&body)["proposals"].as_array().unwrap().clone();
        let mut all_applied = true;
        for p in &proposals {
            let pid = p["id"].as_str().unwrap();
            let status = if p["status"] == "Pending" {
                let (_, body) = self.post(
                    &format!("/sessions/{id}/proposals/{pid}/decision"),
                    r#"{"decision":"approve"}"#,
                );
                json_of(&body)["status"].as_str().unwrap().to_string()
            } else {
                p["status"].as_str().unwrap().to_string()
            };
            all_applied &= status == "Applied";
        }
        all_applied.then(|| self.get(&format!("/sessions/{id}/protocol")).1)
    }

    pub fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn json_of(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|e| panic!("{e}: {text}"))
}

/// Scenario and eval case directories that carry a protocol or use the
/// shared fixture protocol.
pub fn parity_cases() -> Vec<(String, PathBuf, PathBuf)> {
    let mut out = Vec::new();
    for name in ["lungcad", "patient_position", "lateral_topo"] {
        let dir = fixture("scenarios").join(name);
        out.push((
            format!("scenario {name}"),
            dir,
            fixture("protocols/adult_thorax.xml"),
        ));
    }
    let mut cases: Vec<PathBuf> = std::fs::read_dir(fixture("eval/cases"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    cases.sort();
    for dir in cases {
        let name = dir.file_name().unwrap().to_string_lossy().to_string();
        let protocol = dir.join("protocol.xml");
        out.push((format!("case {name}"), dir, protocol));
    }
    out
}
