//! Chat-completion backed oracle with retry, backoff and a response cache.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine as _;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::prompt::{build_membership_prompt, build_merge_prompt, parse_conclusion, Prompt};
use super::{
    MembershipOracle, MembershipQuery, MergeQuery, OracleDecision, OracleError, TemplateSet,
};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "ORACLE_API_KEY";

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay
            .saturating_mul(2u32.saturating_pow(attempt))
            .min(self.max_delay)
    }
}

/// How node images are sent along with a prompt.
#[derive(Debug, Clone, Default)]
pub enum AttachmentMode {
    /// Node ids as text parts; the server resolves them.
    #[default]
    Reference,
    /// `<dir>/<id>.<extension>` inlined as base64 data URLs.
    Inline { dir: PathBuf, extension: String },
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub templates: TemplateSet,
    pub retry: RetryPolicy,
    pub cache_path: Option<PathBuf>,
    pub attachments: AttachmentMode,
    pub temperature: f64,
    pub max_in_flight: usize,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            templates: TemplateSet::default(),
            retry: RetryPolicy::default(),
            cache_path: None,
            attachments: AttachmentMode::default(),
            temperature: 0.2,
            max_in_flight: 4,
            timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    fingerprint: String,
    model: String,
    decision: OracleDecision,
    raw: String,
}

struct Cache {
    entries: HashMap<String, OracleDecision>,
    file: Option<fs::File>,
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut n = self.in_flight.lock().expect("gate lock");
        while *n >= self.limit {
            n = self.freed.wait(n).expect("gate lock");
        }
        *n += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("gate lock") -= 1;
        self.0.freed.notify_one();
    }
}

enum Attempt {
    Reply(String),
    Transient(String),
}

pub struct RemoteOracle {
    config: RemoteConfig,
    client: Client,
    cache: Mutex<Cache>,
    gate: Gate,
    requests: AtomicUsize,
}

impl RemoteOracle {
    pub fn new(config: RemoteConfig) -> Result<Self, OracleError> {
        let url = reqwest::Url::parse(&config.endpoint)
            .map_err(|e| OracleError::Config(format!("endpoint `{}`: {e}", config.endpoint)))?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(OracleError::Config(format!(
                "endpoint `{}` must be http(s)",
                config.endpoint
            )));
        }
        if config.model.trim().is_empty() {
            return Err(OracleError::Config("model name is empty".into()));
        }
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| OracleError::Config(e.to_string()))?;
        let cache = match &config.cache_path {
            Some(path) => Self::open_cache(path, &config.model)?,
            None => Cache {
                entries: HashMap::new(),
                file: None,
            },
        };
        let limit = config.max_in_flight.max(1);
        Ok(RemoteOracle {
            config,
            client,
            cache: Mutex::new(cache),
            gate: Gate {
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
                limit,
            },
            requests: AtomicUsize::new(0),
        })
    }

    fn open_cache(path: &Path, model: &str) -> Result<Cache, OracleError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(fs::File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheEntry>(&line) {
                    Ok(e) if e.model == model => {
                        entries.insert(e.fingerprint, e.decision);
                    }
                    Ok(_) => {}
                    // A torn final line from an interrupted run is skipped.
                    Err(err) => log::warn!("{}:{}: skipping cache line: {err}", path.display(), i + 1),
                }
            }
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Cache {
            entries,
            file: Some(file),
        })
    }

    /// HTTP requests sent so far, including retries.
    pub fn requests_sent(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    fn fingerprint(&self, kind: &str, prompt: &Prompt) -> String {
        let mut h = Sha256::new();
        for part in [kind, &self.config.model, &prompt.text] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        for id in &prompt.attachments {
            h.update((id.as_str().len() as u64).to_le_bytes());
            h.update(id.as_str().as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn attachment_part(&self, id: &str) -> Result<Value, OracleError> {
        Ok(match &self.config.attachments {
            AttachmentMode::Reference => json!({"type": "text", "text": format!("[image: {id}]")}),
            AttachmentMode::Inline { dir, extension } => {
                let path = dir.join(format!("{id}.{extension}"));
                let bytes = fs::read(&path).map_err(|e| {
                    OracleError::Config(format!("image {}: {e}", path.display()))
                })?;
                let data = base64::engine::general_purpose::STANDARD.encode(bytes);
                json!({
                    "type": "image_url",
                    "image_url": {"url": format!("data:image/{extension};base64,{data}")}
                })
            }
        })
    }

    fn request_body(&self, prompt: &Prompt) -> Result<Value, OracleError> {
        let mut content = vec![json!({"type": "text", "text": prompt.text})];
        for id in &prompt.attachments {
            content.push(self.attachment_part(id.as_str())?);
        }
        Ok(json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": content}],
        }))
    }

    fn send_once(&self, body: &Value) -> Result<Attempt, OracleError> {
        let _slot = self.gate.acquire();
        self.requests.fetch_add(1, Ordering::Relaxed);
        let mut req = self.client.post(&self.config.endpoint).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Transient(e.to_string())),
        };
        let status = resp.status();
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Err(OracleError::Auth {
                status: status.as_u16(),
            });
        }
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Ok(Attempt::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(OracleError::Config(format!(
                "endpoint `{}` answered HTTP {status}",
                self.config.endpoint
            )));
        }
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Ok(Attempt::Transient(e.to_string())),
        };
        Ok(Attempt::Reply(extract_content(&text).unwrap_or(text)))
    }

    fn ask(&self, kind: &str, prompt: Prompt) -> Result<OracleDecision, OracleError> {
        let key = self.fingerprint(kind, &prompt);
        if let Some(&d) = self.cache.lock().expect("cache lock").entries.get(&key) {
            return Ok(d);
        }
        let body = self.request_body(&prompt)?;
        let mut attempt = 0;
        let raw = loop {
            match self.send_once(&body)? {
                Attempt::Reply(raw) => break raw,
                Attempt::Transient(why) if attempt < self.config.retry.max_retries => {
                    let wait = self.config.retry.delay(attempt);
                    log::warn!("oracle request failed ({why}); retrying in {wait:?}");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Attempt::Transient(why) => {
                    log::warn!("oracle request failed ({why}); giving up after {attempt} retries");
                    // Not cached, so a later run retries it.
                    return Ok(OracleDecision::Unknown);
                }
            }
        };
        let decision = parse_conclusion(&raw);
        let mut cache = self.cache.lock().expect("cache lock");
        cache.entries.insert(key.clone(), decision);
        if let Some(file) = cache.file.as_mut() {
            let entry = CacheEntry {
                fingerprint: key,
                model: self.config.model.clone(),
                decision,
                raw,
            };
            let mut line = serde_json::to_vec(&entry).expect("serializable cache entry");
            line.push(b'\n');
            file.write_all(&line)?;
            file.flush()?;
        }
        Ok(decision)
    }
}

/// `choices[0].message.content` of a chat-completion response.
fn extract_content(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    v.get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_owned)
}

impl MembershipOracle for RemoteOracle {
    fn assess_membership(&self, q: &MembershipQuery<'_>) -> Result<OracleDecision, OracleError> {
        q.validate()?;
        let prompt = build_membership_prompt(q, &self.config.templates.membership)?;
        self.ask("membership", prompt)
    }

    fn assess_merge(&self, q: &MergeQuery<'_>) -> Result<OracleDecision, OracleError> {
        q.validate()?;
        let prompt = build_merge_prompt(q, &self.config.templates.merge)?;
        self.ask("merge", prompt)
    }

    fn descriptor(&self) -> String {
        format!("remote(model={},endpoint={})", self.config.model, self.config.endpoint)
    }
}
