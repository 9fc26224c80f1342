//! JSON-over-HTTP transport shared by the LLM and scoring clients, with a
//! fixture replay backend keyed by request digest.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("HTTP status {status} from {url}")]
    Status { url: String, status: u16 },
    #[error("request to {url} failed: {message}")]
    Network { url: String, message: String },
    #[error("undecodable response: {0}")]
    Decode(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<TransportError> },
    #[error("no fixture response for request digest {0}")]
    FixtureMiss(String),
    #[error("fixture {}: {message}", path.display())]
    Fixture { path: PathBuf, message: String },
}

impl TransportError {
    fn retryable(&self) -> bool {
        match self {
            TransportError::Network { .. } => true,
            TransportError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Posts one JSON body and returns the decoded JSON response.
pub trait Transport: Send + Sync {
    fn post_json(&self, body: &Value) -> Result<Value, TransportError>;
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 4, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(16) }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << attempt.min(20)).min(self.max_delay)
    }

    /// Runs `op` until it succeeds, fails permanently, or the retry cap is hit.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, TransportError>) -> Result<T, TransportError> {
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.retryable() && attempt < self.max_retries => {
                    thread::sleep(self.delay(attempt));
                    attempt += 1;
                }
                Err(e) if attempt > 0 => {
                    return Err(TransportError::Exhausted { attempts: attempt + 1, last: Box::new(e) })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, api_key: Option<String>, retry: RetryPolicy, timeout: Duration) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        HttpTransport { agent, url: url.into(), api_key, retry }
    }

    fn once(&self, body: &Value) -> Result<Value, TransportError> {
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| TransportError::Network { url: self.url.clone(), message: e.to_string() })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(TransportError::Status { url: self.url.clone(), status });
        }
        resp.body_mut().read_json::<Value>().map_err(|e| TransportError::Decode(e.to_string()))
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, body: &Value) -> Result<Value, TransportError> {
        self.retry.run(|| self.once(body))
    }
}

/// JSON with object keys sorted recursively, used for request digests.
pub fn canonical_json(value: &Value) -> String {
    fn sort(v: &Value) -> Value {
        match v {
            Value::Object(m) => {
                let mut keys: Vec<&String> = m.keys().collect();
                keys.sort();
                let mut out = Map::new();
                for k in keys {
                    out.insert(k.clone(), sort(&m[k]));
                }
                Value::Object(out)
            }
            Value::Array(a) => Value::Array(a.iter().map(sort).collect()),
            other => other.clone(),
        }
    }
    sort(value).to_string()
}

/// Lowercase hex SHA-256 of the canonical request body.
pub fn request_digest(body: &Value) -> String {
    let hash = Sha256::digest(canonical_json(body).as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// One line of a transcript file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<Value>,
    pub response: Value,
}

impl FixtureEntry {
    pub fn new(request: Value, response: Value) -> Self {
        FixtureEntry { digest: request_digest(&request), request: Some(request), response }
    }
}

/// Replays recorded responses without touching the network.
#[derive(Debug, Clone, Default)]
pub struct FixtureTransport {
    responses: HashMap<String, Value>,
}

impl FixtureTransport {
    pub fn from_entries(entries: impl IntoIterator<Item = FixtureEntry>) -> Self {
        FixtureTransport { responses: entries.into_iter().map(|e| (e.digest, e.response)).collect() }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TransportError> {
        let path = path.as_ref();
        let fail = |message: String| TransportError::Fixture { path: path.to_path_buf(), message };
        let file = File::open(path).map_err(|e| fail(e.to_string()))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| fail(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry = serde_json::from_str(&line).map_err(|e| fail(format!("line {}: {e}", i + 1)))?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Transport for FixtureTransport {
    fn post_json(&self, body: &Value) -> Result<Value, TransportError> {
        let digest = request_digest(body);
        self.responses.get(&digest).cloned().ok_or(TransportError::FixtureMiss(digest))
    }
}

pub fn write_fixture(path: impl AsRef<Path>, entries: &[FixtureEntry]) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
