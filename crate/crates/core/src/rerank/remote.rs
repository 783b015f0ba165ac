//! HTTP client for the remote scoring service.
//!
//! Candidates are split into fixed-size batches; up to `max_in_flight`
//! requests are outstanding at once, counted across every client built from
//! clones of one [`ClientConfig`]. Transient failures (5xx, 429, transport
//! errors, timeouts) are retried with linear backoff. Scores are returned
//! in candidate order regardless of completion order.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use serde::de::DeserializeOwned;

use super::wire::{
    ErrorResponse, HealthResponse, ScoreRequest, ScoreResponse, WireGrid, PROTOCOL_VERSION,
};
use super::{two_token_similarity, PromptId, Scorer};
use crate::error::{Error, Result};
use crate::types::TokenGrid;

pub const ENDPOINT_ENV: &str = "TOKENRANK_ENDPOINT";
const MAX_RESPONSE_BYTES: u64 = 1 << 30;
const SCORE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct ClientConfig {
    /// Base URL, e.g. `http://127.0.0.1:8000`.
    pub endpoint: String,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub timeout: Duration,
    /// Additional attempts after the first failure.
    pub retries: usize,
    pub backoff: Duration,
    gate: Arc<InFlight>,
}

impl ClientConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            batch_size: 8,
            max_in_flight: 4,
            timeout: Duration::from_secs(120),
            retries: 2,
            backoff: Duration::from_millis(250),
            gate: Arc::default(),
        }
    }
}

/// Count of outstanding requests shared by clones of a config.
#[derive(Debug, Default)]
struct InFlight {
    active: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn acquire(&self, limit: usize) -> Permit<'_> {
        let mut n = self.active.lock().expect("in-flight lock");
        while *n >= limit.max(1) {
            n = self.freed.wait(n).expect("in-flight lock");
        }
        *n += 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a InFlight);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().expect("in-flight lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// Blocking JSON-over-HTTP transport with retry.
#[derive(Debug)]
pub(crate) struct HttpClient {
    agent: ureq::Agent,
    base: String,
    retries: usize,
    backoff: Duration,
    gate: Arc<InFlight>,
    limit: usize,
}

impl HttpClient {
    pub fn new(cfg: &ClientConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            base: cfg.endpoint.trim_end_matches('/').to_string(),
            retries: cfg.retries,
            backoff: cfg.backoff,
            gate: cfg.gate.clone(),
            limit: cfg.max_in_flight,
        }
    }

    pub fn get_json<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        self.with_retry(|| {
            let resp = self
                .agent
                .get(&format!("{}{path}", self.base))
                .call()
                .map_err(map_transport)?;
            decode(resp)
        })
    }

    pub fn post_json<T: DeserializeOwned>(
        &self,
        path: &str,
        content_type: &str,
        body: &[u8],
    ) -> Result<T> {
        self.with_retry(|| {
            let resp = self
                .agent
                .post(&format!("{}{path}", self.base))
                .header("content-type", content_type)
                .send(body)
                .map_err(map_transport)?;
            decode(resp)
        })
    }

    fn with_retry<T>(&self, mut attempt: impl FnMut() -> Result<T>) -> Result<T> {
        let mut tries = 0;
        loop {
            let result = {
                let _permit = self.gate.acquire(self.limit);
                attempt()
            };
            match result {
                Err(e) if tries < self.retries && retryable(&e) => {
                    tries += 1;
                    warn!("request failed ({e}); retry {tries}/{}", self.retries);
                    thread::sleep(self.backoff * tries as u32);
                }
                other => return other,
            }
        }
    }
}

fn retryable(e: &Error) -> bool {
    match e {
        Error::Timeout | Error::Transport(_) => true,
        Error::ServiceError { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}

fn map_transport(e: ureq::Error) -> Error {
    match e {
        ureq::Error::Timeout(_) => Error::Timeout,
        ureq::Error::Io(io)
            if matches!(
                io.kind(),
                std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock
            ) =>
        {
            Error::Timeout
        }
        other => Error::Transport(other.to_string()),
    }
}

fn decode<T: DeserializeOwned>(mut resp: ureq::http::Response<ureq::Body>) -> Result<T> {
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .with_config()
        .limit(MAX_RESPONSE_BYTES)
        .read_to_string()
        .map_err(map_transport)?;
    if !(200..300).contains(&status) {
        let message = serde_json::from_str::<ErrorResponse>(&text)
            .map(|e| e.error)
            .unwrap_or(text);
        return Err(match status {
            409 => Error::ProtocolMismatch(message),
            _ => Error::ServiceError { status, message },
        });
    }
    serde_json::from_str(&text)
        .map_err(|e| Error::ProtocolMismatch(format!("unexpected response body: {e}")))
}

/// [`Scorer`] backed by the remote service.
#[derive(Debug)]
pub struct RemoteScorer {
    http: HttpClient,
    cfg: ClientConfig,
    dim: usize,
    model: String,
}

impl RemoteScorer {
    /// Checks service health and protocol version before any scoring.
    pub fn connect(cfg: ClientConfig) -> Result<Self> {
        if cfg.batch_size == 0 || cfg.max_in_flight == 0 {
            return Err(Error::InvalidParameter(
                "batch size and in-flight limit must be positive".into(),
            ));
        }
        let http = HttpClient::new(&cfg);
        let health: HealthResponse = http.get_json("/v1/health")?;
        if health.protocol != PROTOCOL_VERSION {
            return Err(Error::ProtocolMismatch(format!(
                "service speaks protocol {}, client {}",
                health.protocol, PROTOCOL_VERSION
            )));
        }
        debug!(
            "connected to {} (model {}, d={})",
            cfg.endpoint, health.model, health.d
        );
        Ok(Self {
            http,
            cfg,
            dim: health.d,
            model: health.model,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    fn score_one_batch(
        &self,
        query: &WireGrid,
        batch: &[TokenGrid],
        prompt: PromptId,
    ) -> Result<Vec<f64>> {
        let req = ScoreRequest {
            protocol: PROTOCOL_VERSION,
            d: self.dim,
            prompt_id: prompt.as_str().to_string(),
            query: query.clone(),
            candidates: batch.iter().map(WireGrid::from_grid).collect(),
        };
        let body = serde_json::to_vec(&req).map_err(|e| Error::Parse(e.to_string()))?;
        let resp: ScoreResponse = self
            .http
            .post_json("/v1/score", "application/json", &body)?;
        if resp.protocol != PROTOCOL_VERSION {
            return Err(Error::ProtocolMismatch(format!(
                "response protocol {}",
                resp.protocol
            )));
        }
        if resp.logits.len() != batch.len() || resp.scores.len() != batch.len() {
            return Err(Error::ProtocolMismatch(format!(
                "{} logits / {} scores for {} candidates",
                resp.logits.len(),
                resp.scores.len(),
                batch.len()
            )));
        }
        resp.logits
            .iter()
            .zip(&resp.scores)
            .map(|(&[l0, l1], &reported)| {
                let s = two_token_similarity(l1, l0)?;
                if (s - reported).abs() > SCORE_TOLERANCE {
                    return Err(Error::ProtocolMismatch(format!(
                        "reported score {reported} disagrees with logits ({l0}, {l1})"
                    )));
                }
                Ok(s)
            })
            .collect()
    }
}

impl Scorer for RemoteScorer {
    fn id(&self) -> String {
        format!("remote:{}", self.model)
    }

    fn score_batch(
        &self,
        query: &TokenGrid,
        candidates: &[TokenGrid],
        prompt: PromptId,
    ) -> Result<Vec<f64>> {
        for g in std::iter::once(query).chain(candidates) {
            if g.dim() != self.dim {
                return Err(Error::ProtocolMismatch(format!(
                    "token dimension {} but service expects {}",
                    g.dim(),
                    self.dim
                )));
            }
        }
        let wire_query = WireGrid::from_grid(query);
        let batches: Vec<&[TokenGrid]> = candidates.chunks(self.cfg.batch_size).collect();
        let results: Vec<Mutex<Option<Result<Vec<f64>>>>> =
            batches.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let failed = AtomicBool::new(false);
        let workers = self.cfg.max_in_flight.min(batches.len());
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if failed.load(Ordering::Relaxed) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(batch) = batches.get(i) else { break };
                    let r = self.score_one_batch(&wire_query, batch, prompt);
                    if r.is_err() {
                        failed.store(true, Ordering::Relaxed);
                    }
                    *results[i].lock().expect("result slot") = Some(r);
                });
            }
        });
        let mut scores = Vec::with_capacity(candidates.len());
        for slot in results {
            match slot.into_inner().expect("result slot") {
                Some(r) => scores.extend(r?),
                None => {
                    // skipped after an earlier failure, which is reported below
                    continue;
                }
            }
        }
        if scores.len() != candidates.len() {
            return Err(Error::Transport("scoring aborted".into()));
        }
        Ok(scores)
    }
}
