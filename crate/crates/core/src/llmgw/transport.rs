use crate::canonical;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Connection-level failure worth another attempt.
    Retryable(String),
    /// Failure that will not go away on retry.
    Fatal(String),
}

/// One POST of a JSON body. Implementations must be usable from several
/// sessions at once.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &[u8],
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError>;
}

/// Real HTTP via a blocking `reqwest` client.
#[derive(Debug, Default)]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Self {
        HttpTransport { client: reqwest::blocking::Client::new() }
    }
}

impl Transport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &[u8],
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError> {
        let mut req = self
            .client
            .post(url)
            .timeout(timeout)
            .header("content-type", "application/json")
            .body(body.to_vec());
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let resp = req.send().map_err(|e| {
            if e.is_builder() {
                TransportError::Fatal(e.to_string())
            } else {
                TransportError::Retryable(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        let body = resp.bytes().map_err(|e| TransportError::Retryable(e.to_string()))?.to_vec();
        Ok(HttpResponse { status, body })
    }
}

/// Lowercase hex SHA-256 of a request body.
pub fn request_digest(body: &[u8]) -> String {
    Sha256::digest(body).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayEntry {
    pub digest: String,
    pub response: Value,
}

/// Offline transport answering from a script keyed by request digest.
/// A request without a scripted answer is a fatal error, never a guess.
#[derive(Debug, Clone, Default)]
pub struct ReplayTransport {
    responses: BTreeMap<String, Value>,
}

impl ReplayTransport {
    pub fn new() -> Self {
        ReplayTransport::default()
    }

    /// Scripts `response` as the answer to exactly `request_body`.
    pub fn insert(&mut self, request_body: &[u8], response: Value) {
        self.responses.insert(request_digest(request_body), response);
    }

    pub fn insert_digest(&mut self, digest: impl Into<String>, response: Value) {
        self.responses.insert(digest.into(), response);
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Parses canonical JSON lines of `{digest, response}`; blank lines are skipped.
    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        let mut t = ReplayTransport::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: ReplayEntry = serde_json::from_str(line).map_err(|e| format!("replay line {}: {e}", i + 1))?;
            t.responses.insert(e.digest, e.response);
        }
        Ok(t)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_jsonl(&text)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (digest, response) in &self.responses {
            let e = ReplayEntry { digest: digest.clone(), response: response.clone() };
            out.push_str(&canonical::to_string(&e).expect("entries serialize"));
            out.push('\n');
        }
        out
    }
}

impl Transport for ReplayTransport {
    fn post_json(&self, _: &str, _: &[(String, String)], body: &[u8], _: Duration) -> Result<HttpResponse, TransportError> {
        let digest = request_digest(body);
        match self.responses.get(&digest) {
            Some(r) => Ok(HttpResponse { status: 200, body: canonical::to_vec(r).expect("values serialize") }),
            None => Err(TransportError::Fatal(format!("no scripted response for request digest {digest}"))),
        }
    }
}
