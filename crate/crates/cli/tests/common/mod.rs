#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

use serde_json::Value;

pub const BIN: &str = env!("CARGO_BIN_EXE_agentclust");

pub fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn agentclust(args: &[&str], cwd: &Path) -> Run {
    let Output {
        status,
        stdout,
        stderr,
    } = Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .env_remove("ORACLE_API_KEY")
        .output()
        .expect("spawn agentclust");
    Run {
        code: status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&stdout).into_owned(),
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
    }
}

/// Run and require exit 0.
pub fn ok(args: &[&str], cwd: &Path) -> Run {
    let run = agentclust(args, cwd);
    assert_eq!(run.code, 0, "agentclust {args:?} failed:\n{}", run.stderr);
    run
}

/// Errors from validating `instance` against `schemas/<schema>`.
pub fn schema_errors(schema: &str, instance: &Value) -> Vec<String> {
    let text = std::fs::read_to_string(schema_dir().join(schema)).expect("schema file");
    let schema: Value = serde_json::from_str(&text).expect("schema json");
    let validator = jsonschema::validator_for(&schema).expect("valid schema");
    validator.iter_errors(instance).map(|e| e.to_string()).collect()
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("output file")).expect("json")
}

pub fn assert_valid(schema: &str, path: &Path) {
    let errors = schema_errors(schema, &read_json(path));
    assert!(errors.is_empty(), "{} vs {schema}: {errors:?}", path.display());
}

pub fn assert_valid_lines(schema: &str, path: &Path) {
    let text = std::fs::read_to_string(path).expect("output file");
    for line in text.lines() {
        let value: Value = serde_json::from_str(line).expect("json line");
        let errors = schema_errors(schema, &value);
        assert!(errors.is_empty(), "{} vs {schema}: {errors:?}", path.display());
    }
}

/// HTTP server answering every request with `status` and an empty JSON body.
pub fn fixed_status_server(status: u16) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            if !drain_request(&mut stream) {
                continue;
            }
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: 2\r\nConnection: close\r\n\r\n{{}}"
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    url
}

/// Write a planted dataset into `dir` and return the embeddings path.
pub fn simulate(dir: &Path, n: usize, classes: usize, sigma: f64, seed: u64) -> PathBuf {
    ok(
        &[
            "simulate",
            "--n-nodes",
            &n.to_string(),
            "--n-classes",
            &classes.to_string(),
            "--dimension",
            "16",
            "--noise-sigma",
            &sigma.to_string(),
            "--seed",
            &seed.to_string(),
            "--out",
            dir.to_str().unwrap(),
        ],
        dir,
    );
    dir.join("embeddings.jsonl")
}

/// Chat-completion reply whose message content is `content`.
pub fn chat(content: &str) -> String {
    serde_json::json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
    })
    .to_string()
}

/// HTTP server replaying `script` one response per request, then 500s.
/// Returns the URL and a counter of requests served.
pub fn scripted_server(
    script: Vec<(u16, String)>,
) -> (String, std::sync::Arc<std::sync::atomic::AtomicUsize>) {
    use std::sync::atomic::{AtomicUsize, Ordering};
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let served = std::sync::Arc::new(AtomicUsize::new(0));
    let counter = served.clone();
    thread::spawn(move || {
        let mut script = script.into_iter();
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            if !drain_request(&mut stream) {
                continue;
            }
            counter.fetch_add(1, Ordering::SeqCst);
            let (status, body) = script.next().unwrap_or((500, "script exhausted".into()));
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    (url, served)
}

/// Read one request's head and body; false if the peer hung up.
fn drain_request(stream: &mut std::net::TcpStream) -> bool {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return false;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).is_ok()
}

/// Every command, in the order a user would chain them. Paths are relative
/// to the working directory.
pub const PIPELINE: &[&[&str]] = &[
    &[
        "simulate", "--n-nodes", "150", "--n-classes", "3", "--dimension", "16", "--noise-sigma",
        "0.4", "--seed", "9", "--write-graph", "--out", "ds",
    ],
    &["build-graph", "--embeddings", "ds/embeddings.jsonl", "--tau", "0.99", "--out", "graph.json"],
    &[
        "cluster", "--graph", "graph.json", "--labels", "ds/embeddings.jsonl", "--oracle", "exact",
        "--seed", "0", "--out", "exact.json",
    ],
    &[
        "cluster", "--graph", "graph.json", "--labels", "ds/embeddings.jsonl", "--oracle", "noisy",
        "--p", "0.2", "--seed", "3", "--log-steps", "--out", "noisy.json",
    ],
    &[
        "cluster", "--graph", "graph.json", "--embeddings", "ds/embeddings.jsonl", "--oracle",
        "embedding", "--threshold", "0.995", "--merge-strategy", "rounds", "--num-candidates",
        "2", "--seed", "0", "--out", "embedding.json",
    ],
    &[
        "sweep-density", "--embeddings", "ds/embeddings.jsonl", "--density-targets",
        "0.005,0.01,0.02", "--oracle", "noisy", "--p", "0.2", "--seeds", "0..4", "--out",
        "density.json", "--table", "density.tsv",
    ],
    &[
        "sweep-k", "--graph", "graph.json", "--labels", "ds/embeddings.jsonl", "--k-list", "1,2,3",
        "--oracle", "noisy", "--p", "0.3", "--seeds", "0..4", "--out", "k.json", "--table", "k.tsv",
    ],
];

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

/// Run [`PIPELINE`] in two fresh directories and compare every output file
/// and every stdout byte for byte. Returns the number of files compared.
pub fn rerun_pipeline() -> Result<usize, String> {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for args in PIPELINE {
        let runs: Vec<Run> = dirs.iter().map(|d| agentclust(args, d.path())).collect();
        for run in &runs {
            if run.code != 0 {
                return Err(format!("{} exited {}: {}", args[0], run.code, run.stderr));
            }
        }
        if runs[0].stdout != runs[1].stdout {
            return Err(format!("{} printed different output", args[0]));
        }
    }
    // A third run over the first directory must overwrite identically.
    for args in PIPELINE {
        let run = agentclust(args, dirs[0].path());
        if run.code != 0 {
            return Err(format!("{} rerun exited {}", args[0], run.code));
        }
    }
    let files = files_under(dirs[0].path());
    if files != files_under(dirs[1].path()) {
        return Err("the two runs wrote different file sets".into());
    }
    for f in &files {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        if a != b {
            return Err(format!("{} differs between runs", f.display()));
        }
    }
    Ok(files.len())
}
