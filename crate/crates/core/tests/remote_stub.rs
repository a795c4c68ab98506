//! Remote oracle against a scripted local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use agentclust::oracle::{
    MembershipOracle, MembershipQuery, MergeQuery, OracleDecision, OracleError, RemoteConfig,
    RemoteOracle, RetryPolicy,
};
use agentclust::NodeId;
use serde_json::Value;

const YES_REPLY: &str = "The cluster contains cards of rank 3. The candidate card is also of \
                         rank 3. The answer is <CONCLUSION> YES </CONCLUSION>.";

/// Authorization header and JSON body of each request received.
type Log = Arc<Mutex<Vec<(Option<String>, Value)>>>;

struct Stub {
    url: String,
    requests: Log,
}

fn chat(content: &str) -> String {
    serde_json::json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
    })
    .to_string()
}

fn read_request(stream: &mut TcpStream) -> Option<(Option<String>, Value)> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut length = 0;
    let mut auth = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            match name.to_ascii_lowercase().as_str() {
                "content-length" => length = value.trim().parse().ok()?,
                "authorization" => auth = Some(value.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).ok()?;
    Some((auth, serde_json::from_slice(&body).ok()?))
}

/// Serves `script` in order, one response per connection, then 500s.
fn serve(script: Vec<(u16, String)>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let log = requests.clone();
    thread::spawn(move || {
        let mut script = script.into_iter();
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let Some(req) = read_request(&mut stream) else { continue };
            log.lock().unwrap().push(req);
            let (status, body) = script
                .next()
                .unwrap_or((500, "script exhausted".to_string()));
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    Stub { url, requests }
}

fn config(url: &str) -> RemoteConfig {
    let mut c = RemoteConfig::new(url, "stub-model");
    c.api_key = Some("secret".into());
    c.retry = RetryPolicy {
        max_retries: 3,
        base_delay: Duration::from_millis(5),
        max_delay: Duration::from_millis(20),
    };
    c.timeout = Duration::from_secs(10);
    c
}

fn ask(oracle: &RemoteOracle, candidate: &str) -> Result<OracleDecision, OracleError> {
    let reps = [NodeId::from("r1"), NodeId::from("r2")];
    let cand = NodeId::from(candidate);
    oracle.assess_membership(&MembershipQuery {
        representatives: &reps,
        candidate: &cand,
        aspect: "rank",
    })
}

#[test]
fn yes_reply_round_trip() {
    let stub = serve(vec![(200, chat(YES_REPLY))]);
    let oracle = RemoteOracle::new(config(&stub.url)).unwrap();
    assert_eq!(ask(&oracle, "c").unwrap(), OracleDecision::Yes);
    assert_eq!(oracle.requests_sent(), 1);

    let requests = stub.requests.lock().unwrap();
    let (auth, body) = &requests[0];
    assert_eq!(auth.as_deref(), Some("Bearer secret"));
    assert_eq!(body["model"], "stub-model");
    assert_eq!(body["temperature"], 0.2);
    let content = body["messages"][0]["content"].as_array().unwrap();
    assert!(content[0]["text"].as_str().unwrap().contains("based on rank"));
    let refs: Vec<&str> = content[1..].iter().map(|p| p["text"].as_str().unwrap()).collect();
    assert_eq!(refs, ["[image: r1]", "[image: r2]", "[image: c]"]);
}

#[test]
fn garbage_reply_is_unknown() {
    let stub = serve(vec![(200, chat("I cannot tell.")), (200, "not json at all".into())]);
    let oracle = RemoteOracle::new(config(&stub.url)).unwrap();
    assert_eq!(ask(&oracle, "c1").unwrap(), OracleDecision::Unknown);
    assert_eq!(ask(&oracle, "c2").unwrap(), OracleDecision::Unknown);
}

#[test]
fn transient_failures_are_retried() {
    let stub = serve(vec![
        (503, "busy".into()),
        (429, "slow down".into()),
        (200, chat("<CONCLUSION> NO </CONCLUSION>")),
    ]);
    let oracle = RemoteOracle::new(config(&stub.url)).unwrap();
    assert_eq!(ask(&oracle, "c").unwrap(), OracleDecision::No);
    assert_eq!(oracle.requests_sent(), 3);
}

#[test]
fn exhausted_retries_give_unknown_and_are_not_cached() {
    let stub = serve(vec![]);
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(&stub.url);
    c.retry.max_retries = 1;
    c.cache_path = Some(dir.path().join("cache.jsonl"));
    let oracle = RemoteOracle::new(c).unwrap();
    assert_eq!(ask(&oracle, "c").unwrap(), OracleDecision::Unknown);
    assert_eq!(oracle.requests_sent(), 2);
    assert_eq!(ask(&oracle, "c").unwrap(), OracleDecision::Unknown);
    assert_eq!(oracle.requests_sent(), 4);
}

#[test]
fn cache_hits_skip_the_network_across_instances() {
    let stub = serve(vec![(200, chat(YES_REPLY))]);
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(&stub.url);
    c.cache_path = Some(dir.path().join("cache.jsonl"));

    let first = RemoteOracle::new(c.clone()).unwrap();
    assert_eq!(ask(&first, "c").unwrap(), OracleDecision::Yes);
    assert_eq!(ask(&first, "c").unwrap(), OracleDecision::Yes);
    assert_eq!(first.requests_sent(), 1);

    let second = RemoteOracle::new(c.clone()).unwrap();
    assert_eq!(ask(&second, "c").unwrap(), OracleDecision::Yes);
    assert_eq!(second.requests_sent(), 0);

    // Another model does not share entries.
    c.model = "other-model".into();
    let third = RemoteOracle::new(c).unwrap();
    assert_eq!(ask(&third, "c").unwrap(), OracleDecision::Unknown);
    assert!(third.requests_sent() > 0);
}

#[test]
fn auth_failure_is_an_error() {
    for status in [401, 403] {
        let stub = serve(vec![(status, "{}".into())]);
        let oracle = RemoteOracle::new(config(&stub.url)).unwrap();
        let err = ask(&oracle, "c").unwrap_err();
        assert!(matches!(err, OracleError::Auth { status: s } if s == status));
    }
}

#[test]
fn merge_queries_use_the_merge_template() {
    let stub = serve(vec![(200, chat("<CONCLUSION>yes</CONCLUSION>"))]);
    let oracle = RemoteOracle::new(config(&stub.url)).unwrap();
    let a = [NodeId::from("a")];
    let b = [NodeId::from("b")];
    let d = oracle
        .assess_merge(&MergeQuery {
            representatives_a: &a,
            representatives_b: &b,
            aspect: "color",
        })
        .unwrap();
    assert_eq!(d, OracleDecision::Yes);
    let requests = stub.requests.lock().unwrap();
    let text = requests[0].1["messages"][0]["content"][0]["text"].as_str().unwrap().to_string();
    assert!(text.contains("clusters should be merged based on color"));
}

#[test]
fn inline_attachments_are_base64_data_urls() {
    let stub = serve(vec![(200, chat("<CONCLUSION>no</CONCLUSION>"))]);
    let dir = tempfile::tempdir().unwrap();
    for id in ["r1", "r2", "c"] {
        std::fs::write(dir.path().join(format!("{id}.png")), id.as_bytes()).unwrap();
    }
    let mut c = config(&stub.url);
    c.attachments = agentclust::oracle::AttachmentMode::Inline {
        dir: dir.path().to_path_buf(),
        extension: "png".into(),
    };
    let oracle = RemoteOracle::new(c).unwrap();
    assert_eq!(ask(&oracle, "c").unwrap(), OracleDecision::No);
    let requests = stub.requests.lock().unwrap();
    let url = requests[0].1["messages"][0]["content"][3]["image_url"]["url"]
        .as_str()
        .unwrap()
        .to_string();
    // base64("c") = "Yw=="
    assert_eq!(url, "data:image/png;base64,Yw==");
}
