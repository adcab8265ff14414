//! Reference implementation of the wire protocol: serves the add-α
//! unigram scorer and the mock embedder over HTTP so the remote client,
//! integration tests, and the CLI pipeline can run against a real
//! socket without a model server.
//!
//! Endpoints (all bodies UTF-8 JSON):
//! - `GET /v1/health` → `{"status":"ok","model":"<name>"}`
//! - `POST /v1/score` `{"context","target","vocab_size"?}` →
//!   `{"log_prob","token_log_probs","tokens"}`; the optional
//!   `vocab_size` pins the vocabulary, otherwise it is computed from
//!   the request's own context and target.
//! - `POST /v1/embed` `{"text"}` → `{"tokens","vectors"}`
//!
//! Malformed JSON gets 400, semantically invalid input 422, unknown
//! routes 404, each with an `{"error": "..."}` body.


use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::Deserialize;
use serde_json::json;

use crate::scorer::{self, ScoreError, ScoreQuery};

/// Settings of the served reference backend.
#[derive(Debug, Clone)]
pub struct MockServerConfig {
    pub alpha: f64,
    pub embed_dim: usize,
    pub model_name: String,
}

impl Default for MockServerConfig {
    fn default() -> Self {
        MockServerConfig {
            alpha: 1.0,
            embed_dim: 64,
            model_name: "reference-unigram".to_string(),
        }
    }
}

/// Route one request. Pure: exercised directly by unit tests and by the
/// socket loop below.
pub fn route(method: &str, path: &str, body: &str, cfg: &MockServerConfig) -> (u16, String) {
    match (method, path) {
        ("GET", "/v1/health") => (
            200,
            json!({"status": "ok", "model": cfg.model_name}).to_string(),
        ),
        ("POST", "/v1/score") => handle_score(body, cfg),
        ("POST", "/v1/embed") => handle_embed(body, cfg),
        _ => (404, json!({"error": "not found"}).to_string()),
    }
}

fn handle_score(body: &str, cfg: &MockServerConfig) -> (u16, String) {
    let query: ScoreQuery = match serde_json::from_str(body) {
        Ok(q) => q,
        Err(e) => return (400, json!({"error": format!("malformed request: {e}")}).to_string()),
    };
    let vocab = query
        .vocab_size
        .unwrap_or_else(|| scorer::reference::distinct_token_count(&query.context, &query.target));
    match scorer::reference_score(&query.context, &query.target, cfg.alpha, vocab) {
        Ok(result) => (200, serde_json::to_string(&result).expect("serializable")),
        Err(e) => (error_status(&e), json!({"error": e.to_string()}).to_string()),
    }
}

#[derive(Deserialize)]
struct EmbedRequest {
    text: String,
}

fn handle_embed(body: &str, cfg: &MockServerConfig) -> (u16, String) {
    let req: EmbedRequest = match serde_json::from_str(body) {
        Ok(r) => r,
        Err(e) => return (400, json!({"error": format!("malformed request: {e}")}).to_string()),
    };
    let tokens: Vec<&str> = req.text.split_whitespace().collect();
    match scorer::mock_embed(&tokens, cfg.embed_dim) {
        Ok(result) => (200, serde_json::to_string(&result).expect("serializable")),
        Err(e) => (error_status(&e), json!({"error": e.to_string()}).to_string()),
    }
}

fn error_status(e: &ScoreError) -> u16 {
    match e {
        ScoreError::EmptyTarget | ScoreError::InvalidParameter { .. } => 422,
        _ => 500,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {detail}")]
    Bind { addr: String, detail: String },
}

/// A running mock server. Handles concurrent requests on a small worker
/// pool, counts every request it serves, and shuts down cleanly on drop.
pub struct RunningServer {
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
    workers: Vec<JoinHandle<()>>,
    requests: Arc<AtomicU64>,
}

const WORKER_THREADS: usize = 4;

impl RunningServer {
    /// Bind and start serving. Use port 0 for an ephemeral port.
    pub fn bind(addr: &str, cfg: MockServerConfig) -> Result<Self, ServerError> {
        let server = Arc::new(tiny_http::Server::http(addr).map_err(|e| ServerError::Bind {
            addr: addr.to_string(),
            detail: e.to_string(),
        })?);
        let bound = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| ServerError::Bind {
                addr: addr.to_string(),
                detail: "no ip address".to_string(),
            })?;
        let requests = Arc::new(AtomicU64::new(0));
        let workers = (0..WORKER_THREADS)
            .map(|_| {
                let server = Arc::clone(&server);
                let cfg = cfg.clone();
                let requests = Arc::clone(&requests);
                std::thread::spawn(move || serve_loop(&server, &cfg, &requests))
            })
            .collect();
        Ok(RunningServer {
            server,
            addr: bound,
            workers,
            requests,
        })
    }

    /// Ephemeral localhost server for tests.
    pub fn spawn_local(cfg: MockServerConfig) -> Result<Self, ServerError> {
        Self::bind("127.0.0.1:0", cfg)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Total requests served so far (any route).
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.server.unblock();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn serve_loop(server: &tiny_http::Server, cfg: &MockServerConfig, requests: &AtomicU64) {
    while let Ok(mut request) = server.recv() {
        requests.fetch_add(1, Ordering::SeqCst);
        let method = request.method().as_str().to_string();
        let path = request
            .url()
            .split('?')
            .next()
            .unwrap_or_default()
            .to_string();
        let mut body = String::new();
        let (status, response_body) = match request.as_reader().read_to_string(&mut body) {
            Ok(_) => route(&method, &path, &body, cfg),
            Err(e) => (400, json!({"error": format!("unreadable body: {e}")}).to_string()),
        };
        log::info!("{method} {path} -> {status}");
        let response = tiny_http::Response::from_string(response_body)
            .with_status_code(status)
            .with_header(
                "Content-Type: application/json"
                    .parse::<tiny_http::Header>()
                    .expect("static header"),
            );
        if let Err(e) = request.respond(response) {
            log::warn!("failed to send response: {e}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> MockServerConfig {
        MockServerConfig::default()
    }

    #[test]
    fn health_reports_model_name() {
        let (status, body) = route("GET", "/v1/health", "", &cfg());
        assert_eq!(status, 200);
        assert_eq!(body, r#"{"model":"reference-unigram","status":"ok"}"#);
    }

    #[test]
    fn score_route_runs_reference_arithmetic() {
        let (status, body) = route(
            "POST",
            "/v1/score",
            r#"{"context":"a b","target":"a"}"#,
            &cfg(),
        );
        assert_eq!(status, 200);
        let result: crate::scorer::ScoreResult = serde_json::from_str(&body).unwrap();
        assert!((result.log_prob - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn score_route_honors_pinned_vocab() {
        let (_, free) = route(
            "POST",
            "/v1/score",
            r#"{"context":"a b","target":"a"}"#,
            &cfg(),
        );
        let (_, pinned) = route(
            "POST",
            "/v1/score",
            r#"{"context":"a b","target":"a","vocab_size":4}"#,
            &cfg(),
        );
        assert_ne!(free, pinned);
    }

    #[test]
    fn malformed_json_is_400_with_error() {
        let (status, body) = route("POST", "/v1/score", "{oops", &cfg());
        assert_eq!(status, 400);
        assert!(body.contains("error"));
    }

    #[test]
    fn invalid_input_is_422() {
        let (status, _) = route(
            "POST",
            "/v1/score",
            r#"{"context":"a","target":""}"#,
            &cfg(),
        );
        assert_eq!(status, 422);
    }

    #[test]
    fn embed_route_returns_unit_vectors() {
        let (status, body) = route("POST", "/v1/embed", r#"{"text":"a b"}"#, &cfg());
        assert_eq!(status, 200);
        let result: crate::scorer::EmbeddingResult = serde_json::from_str(&body).unwrap();
        assert_eq!(result.tokens.len(), 2);
        assert_eq!(result.vectors[0].len(), 64);
    }

    #[test]
    fn embed_route_handles_empty_text() {
        let (status, body) = route("POST", "/v1/embed", r#"{"text":""}"#, &cfg());
        assert_eq!(status, 200);
        let result: crate::scorer::EmbeddingResult = serde_json::from_str(&body).unwrap();
        assert!(result.tokens.is_empty());
        assert!(result.vectors.is_empty());
    }

    #[test]
    fn unknown_route_is_404() {
        let (status, _) = route("GET", "/v2/other", "", &cfg());
        assert_eq!(status, 404);
    }

    #[test]
    fn port_in_use_is_reported() {
        let first = RunningServer::spawn_local(cfg()).unwrap();
        let addr = first.addr().to_string();
        match RunningServer::bind(&addr, cfg()) {
            Err(ServerError::Bind { .. }) => {}
            Ok(_) => panic!("bind to an occupied port should fail"),
        }
    }
}
