//! In-process stand-in for the scoring service, speaking the same wire
//! protocol over plain HTTP/1.1. Intended for tests and local runs of the
//! client; it answers with deterministic logits and can inject failures.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::mock::mock_chamfer_score;
use super::two_token_similarity;
use super::wire::{
    ErrorResponse, ExtractResponse, HealthResponse, ScoreRequest, ScoreResponse, WireGrid,
};
use crate::robustness::{Extractor, Image, PatchExtractor};
use crate::types::GlobalDescriptor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StubLogits {
    /// The same `(logit("0"), logit("1"))` for every pair.
    Fixed { zero: f64, one: f64 },
    /// Logits whose two-token softmax equals the mock Chamfer score.
    Chamfer,
}

#[derive(Debug, Clone)]
pub struct StubConfig {
    pub d: usize,
    pub protocol: u32,
    pub model: String,
    pub logits: StubLogits,
    /// Number of initial `/v1/score` requests answered with 503.
    pub fail_first: usize,
    pub delay_per_pair: Duration,
    /// Patch size of the `/v1/extract` extractor.
    pub patch: u32,
}

impl Default for StubConfig {
    fn default() -> Self {
        Self {
            d: 8,
            protocol: 1,
            model: "stub".into(),
            logits: StubLogits::Chamfer,
            fail_first: 0,
            delay_per_pair: Duration::ZERO,
            patch: 8,
        }
    }
}

#[derive(Debug, Default)]
pub struct StubStats {
    pub score_requests: AtomicUsize,
    pub failures_sent: AtomicUsize,
    pub batch_sizes: Mutex<Vec<usize>>,
    /// Largest number of `/v1/score` requests handled at the same time.
    pub max_concurrent: AtomicUsize,
    active: AtomicUsize,
}

pub struct StubService {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    stats: Arc<StubStats>,
    handle: Option<JoinHandle<()>>,
}

impl StubService {
    pub fn start(cfg: StubConfig) -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let stats = Arc::new(StubStats::default());
        let cfg = Arc::new(cfg);
        let handle = {
            let shutdown = shutdown.clone();
            let stats = stats.clone();
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let cfg = cfg.clone();
                    let stats = stats.clone();
                    thread::spawn(move || {
                        let _ = handle_connection(stream, &cfg, &stats);
                    });
                }
            })
        };
        Ok(Self {
            addr,
            shutdown,
            stats,
            handle: Some(handle),
        })
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stats(&self) -> &StubStats {
        &self.stats
    }
}

impl Drop for StubService {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

struct Request {
    method: String,
    path: String,
    query: String,
    body: Vec<u8>,
}

fn read_request(stream: &TcpStream) -> io::Result<Request> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let target = parts.next().unwrap_or_default();
    let (path, query) = target.split_once('?').unwrap_or((target, ""));
    let (path, query) = (path.to_string(), query.to_string());
    let mut content_length = 0usize;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.trim().eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    Ok(Request {
        method,
        path,
        query,
        body,
    })
}

fn respond(mut stream: &TcpStream, status: u16, body: &str) -> io::Result<()> {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        409 => "Conflict",
        422 => "Unprocessable Entity",
        503 => "Service Unavailable",
        _ => "Error",
    };
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()
}

fn error_body(msg: impl Into<String>) -> String {
    serde_json::to_string(&ErrorResponse { error: msg.into() }).expect("serializable")
}

fn handle_connection(stream: TcpStream, cfg: &StubConfig, stats: &StubStats) -> io::Result<()> {
    let req = read_request(&stream)?;
    let (status, body) = match (req.method.as_str(), req.path.as_str()) {
        ("GET", "/v1/health") => (
            200,
            serde_json::to_string(&HealthResponse {
                protocol: cfg.protocol,
                d: cfg.d,
                model: cfg.model.clone(),
            })
            .expect("serializable"),
        ),
        ("POST", "/v1/score") => {
            let now = stats.active.fetch_add(1, Ordering::SeqCst) + 1;
            stats.max_concurrent.fetch_max(now, Ordering::SeqCst);
            let r = score(&req.body, cfg, stats);
            stats.active.fetch_sub(1, Ordering::SeqCst);
            r
        }
        ("POST", "/v1/extract") => extract(&req.body, &req.query, cfg),
        _ => (404, error_body("not found")),
    };
    respond(&stream, status, &body)
}

fn score(body: &[u8], cfg: &StubConfig, stats: &StubStats) -> (u16, String) {
    let n = stats.score_requests.fetch_add(1, Ordering::SeqCst);
    if n < cfg.fail_first {
        stats.failures_sent.fetch_add(1, Ordering::SeqCst);
        return (503, error_body("warming up"));
    }
    let req: ScoreRequest = match serde_json::from_slice(body) {
        Ok(r) => r,
        Err(e) => return (400, error_body(e.to_string())),
    };
    if req.protocol != cfg.protocol {
        return (
            409,
            error_body(format!("protocol {} unsupported", req.protocol)),
        );
    }
    if req.d != cfg.d {
        return (
            422,
            error_body(format!("d={} but model has d={}", req.d, cfg.d)),
        );
    }
    stats
        .batch_sizes
        .lock()
        .expect("stats lock")
        .push(req.candidates.len());
    thread::sleep(cfg.delay_per_pair * req.candidates.len() as u32);
    let query = match req.query.to_grid(cfg.d) {
        Ok(q) => q,
        Err(e) => return (422, error_body(e.to_string())),
    };
    let mut logits = Vec::with_capacity(req.candidates.len());
    for c in &req.candidates {
        let pair = match cfg.logits {
            StubLogits::Fixed { zero, one } => [zero, one],
            StubLogits::Chamfer => {
                let cand = match c.to_grid(cfg.d) {
                    Ok(g) => g,
                    Err(e) => return (422, error_body(e.to_string())),
                };
                let s = mock_chamfer_score(&query, &cand)
                    .unwrap_or(0.5)
                    .clamp(1e-12, 1.0 - 1e-12);
                [0.0, (s / (1.0 - s)).ln()]
            }
        };
        logits.push(pair);
    }
    let scores = logits
        .iter()
        .map(|&[l0, l1]| two_token_similarity(l1, l0).unwrap_or(0.5))
        .collect();
    let resp = ScoreResponse {
        protocol: cfg.protocol,
        scores,
        logits,
    };
    (200, serde_json::to_string(&resp).expect("serializable"))
}

fn extract(body: &[u8], query: &str, cfg: &StubConfig) -> (u16, String) {
    if body.is_empty() {
        return (400, error_body("empty image"));
    }
    let mut img = match Image::decode_png(body) {
        Ok(i) => i,
        Err(e) => return (400, error_body(e.to_string())),
    };
    let resolution = query
        .split('&')
        .find_map(|kv| kv.strip_prefix("resolution="))
        .map(str::parse::<u32>);
    match resolution {
        Some(Ok(r)) if r >= cfg.patch && r % cfg.patch == 0 => img = img.resize_longer_side(r),
        Some(_) => return (422, error_body("bad resolution")),
        None => {}
    }
    let extractor = PatchExtractor::new(cfg.patch);
    let grid = match extractor.extract(&img) {
        Ok(g) => g,
        Err(e) => return (422, error_body(e.to_string())),
    };
    let mut mean = vec![0f32; grid.dim()];
    for t in grid.iter_tokens() {
        for (m, v) in mean.iter_mut().zip(t) {
            *m += v;
        }
    }
    let global = GlobalDescriptor::normalized(mean)
        .ok()
        .map(|g| g.as_slice().to_vec());
    let resp = ExtractResponse {
        protocol: cfg.protocol,
        d: grid.dim(),
        grid: WireGrid::from_grid(&grid),
        global,
    };
    (200, serde_json::to_string(&resp).expect("serializable"))
}
