//! HTTP client for the NLI and quality-scoring sidecar.
//!
//! Requests go out in batches of at most [`MAX_BATCH`] pairs. Transport
//! failures and 5xx responses are retried with exponential backoff, up to
//! [`ATTEMPTS`] tries per batch; anything else fails immediately.

use std::sync::{Condvar, Mutex, OnceLock};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use uqbench_core::{NliProbs, NliProvider, ProviderError};

pub const MAX_BATCH: usize = 64;
pub const ATTEMPTS: u32 = 3;
/// Environment variable overriding the configured sidecar endpoint.
pub const ENDPOINT_ENV: &str = "UQBENCH_NLI_ENDPOINT";
pub const SIMPLEX_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClientError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("sidecar answered HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
}

impl ClientError {
    fn retryable(&self) -> bool {
        match self {
            ClientError::Transport(_) => true,
            ClientError::Status { code, .. } => *code >= 500,
            ClientError::ProtocolViolation(_) => false,
        }
    }
}

impl From<ClientError> for ProviderError {
    fn from(err: ClientError) -> Self {
        ProviderError(err.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub endpoint: String,
    pub timeout_secs: f64,
    /// Upper bound on concurrently outstanding requests.
    pub max_inflight: usize,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff_ms: u64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self { endpoint: "http://127.0.0.1:8765".into(), timeout_secs: 30.0, max_inflight: 4, backoff_ms: 200 }
    }
}

#[derive(Serialize)]
struct PairsRequest<'a> {
    pairs: Vec<[&'a str; 2]>,
}

#[derive(Deserialize)]
struct NliResponse {
    results: Vec<NliProbs>,
    model_id: String,
}

#[derive(Deserialize)]
struct QualityResponse {
    scores: Vec<f64>,
}

struct Inflight {
    count: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct InflightGuard<'a>(&'a Inflight);

impl Inflight {
    fn acquire(&self) -> InflightGuard<'_> {
        let mut count = self.count.lock().unwrap_or_else(|e| e.into_inner());
        while *count >= self.limit {
            count = self.freed.wait(count).unwrap_or_else(|e| e.into_inner());
        }
        *count += 1;
        InflightGuard(self)
    }
}

impl Drop for InflightGuard<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().unwrap_or_else(|e| e.into_inner()) -= 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpNliClient {
    agent: ureq::Agent,
    config: ClientConfig,
    inflight: Inflight,
    model_id: OnceLock<String>,
}

impl HttpNliClient {
    pub fn new(config: ClientConfig) -> Self {
        let timeout = Duration::from_secs_f64(config.timeout_secs.max(0.001));
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        let inflight = Inflight { count: Mutex::new(0), freed: Condvar::new(), limit: config.max_inflight.max(1) };
        Self { agent, config, inflight, model_id: OnceLock::new() }
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.config.endpoint.trim_end_matches('/'))
    }

    fn post_once<T: serde::de::DeserializeOwned>(&self, path: &str, pairs: &[(&str, &str)]) -> Result<T, ClientError> {
        let body = PairsRequest { pairs: pairs.iter().map(|(a, b)| [*a, *b]).collect() };
        let _slot = self.inflight.acquire();
        match self.agent.post(&self.url(path)).send_json(&body) {
            Ok(resp) => resp
                .into_json::<T>()
                .map_err(|e| ClientError::ProtocolViolation(format!("unreadable response body: {e}"))),
            Err(ureq::Error::Status(code, resp)) => {
                Err(ClientError::Status { code, body: resp.into_string().unwrap_or_default() })
            }
            Err(ureq::Error::Transport(t)) => Err(ClientError::Transport(t.to_string())),
        }
    }

    fn post<T: serde::de::DeserializeOwned>(&self, path: &str, pairs: &[(&str, &str)]) -> Result<T, ClientError> {
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut attempt = 1;
        loop {
            match self.post_once(path, pairs) {
                Err(e) if e.retryable() && attempt < ATTEMPTS => {
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    /// NLI probabilities for each `(premise, hypothesis)` pair, in order.
    pub fn nli(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliProbs>, ClientError> {
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(MAX_BATCH) {
            let resp: NliResponse = self.post("/v1/nli", chunk)?;
            if resp.results.len() != chunk.len() {
                return Err(ClientError::ProtocolViolation(format!(
                    "sent {} pairs, received {} results",
                    chunk.len(),
                    resp.results.len()
                )));
            }
            if let Some(bad) = resp.results.iter().find(|p| !p.is_simplex(SIMPLEX_TOL)) {
                return Err(ClientError::ProtocolViolation(format!("not a probability triple: {bad:?}")));
            }
            let known = self.model_id.get_or_init(|| resp.model_id.clone());
            if *known != resp.model_id {
                return Err(ClientError::ProtocolViolation(format!("model changed from {known} to {}", resp.model_id)));
            }
            out.extend(resp.results);
        }
        Ok(out)
    }

    /// Alignment-style quality scores for `(claim, context)` pairs.
    pub fn quality(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>, ClientError> {
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(MAX_BATCH) {
            let resp: QualityResponse = self.post("/v1/quality", chunk)?;
            if resp.scores.len() != chunk.len() {
                return Err(ClientError::ProtocolViolation(format!(
                    "sent {} pairs, received {} scores",
                    chunk.len(),
                    resp.scores.len()
                )));
            }
            if resp.scores.iter().any(|s| !s.is_finite()) {
                return Err(ClientError::ProtocolViolation("non-finite quality score".into()));
            }
            out.extend(resp.scores);
        }
        Ok(out)
    }
}

impl NliProvider for HttpNliClient {
    fn nli_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliProbs>, ProviderError> {
        Ok(self.nli(pairs)?)
    }

    /// Empty until the sidecar has answered once.
    fn model_id(&self) -> &str {
        self.model_id.get().map(String::as_str).unwrap_or("")
    }
}
