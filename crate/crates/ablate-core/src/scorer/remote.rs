//! Wire-protocol client for remote scoring/embedding servers.
//!
//! The protocol is three JSON endpoints: `GET /v1/health`,
//! `POST /v1/score`, and `POST /v1/embed` (see [`crate::server`] for
//! the reference implementation). Transport failures and HTTP 5xx are
//! retried with exponential backoff; 4xx responses and protocol
//! violations fail immediately.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    validate_embedding_result, validate_score_result, EmbedBackend, EmbeddingResult, ScoreBackend,
    ScoreError, ScoreQuery, ScoreResult,
};

/// Retry schedule for transport-class failures: up to `max_attempts`
/// tries, sleeping `base_backoff × 2^(n−1)` after the n-th failure.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_backoff: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    pub fn backoff_after(&self, failed_attempts: u32) -> Duration {
        let factor = 2u32.saturating_pow(failed_attempts.saturating_sub(1));
        self.base_backoff.saturating_mul(factor)
    }
}

/// Counting gate bounding simultaneous in-flight requests per endpoint.
#[derive(Debug, Clone)]
struct InFlightGate {
    state: Option<Arc<(Mutex<usize>, Condvar)>>,
    cap: usize,
}

impl InFlightGate {
    fn new(cap: Option<usize>) -> Self {
        match cap {
            Some(cap) if cap > 0 => InFlightGate {
                state: Some(Arc::new((Mutex::new(0), Condvar::new()))),
                cap,
            },
            _ => InFlightGate {
                state: None,
                cap: 0,
            },
        }
    }

    fn acquire(&self) -> InFlightPermit<'_> {
        if let Some(state) = &self.state {
            let (lock, cv) = &**state;
            let mut count = lock.lock().expect("gate lock");
            while *count >= self.cap {
                count = cv.wait(count).expect("gate wait");
            }
            *count += 1;
        }
        InFlightPermit { gate: self }
    }
}

struct InFlightPermit<'a> {
    gate: &'a InFlightGate,
}

impl Drop for InFlightPermit<'_> {
    fn drop(&mut self) {
        if let Some(state) = &self.gate.state {
            let (lock, cv) = &**state;
            let mut count = lock.lock().expect("gate lock");
            *count -= 1;
            cv.notify_one();
        }
    }
}

/// `GET /v1/health` response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HealthInfo {
    pub status: String,
    pub model: String,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

/// A remote endpoint speaking the wire protocol, usable both as a
/// [`ScoreBackend`] and an [`EmbedBackend`]. Safe to share across
/// threads; the in-flight gate applies per instance.
#[derive(Clone)]
pub struct RemoteBackend {
    agent: ureq::Agent,
    base_url: String,
    policy: RetryPolicy,
    gate: InFlightGate,
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self::builder(endpoint).build()
    }

    pub fn builder(endpoint: impl Into<String>) -> RemoteBackendBuilder {
        RemoteBackendBuilder {
            endpoint: endpoint.into(),
            policy: RetryPolicy::default(),
            max_in_flight: None,
            timeout: Duration::from_secs(30),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.base_url
    }

    /// One-shot health probe; not retried.
    pub fn health(&self) -> Result<HealthInfo, ScoreError> {
        let url = format!("{}/v1/health", self.base_url);
        let mut resp = self.agent.get(&url).call().map_err(|e| ScoreError::Transport {
            attempts: 1,
            detail: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        if (200..300).contains(&status) {
            resp.body_mut()
                .read_json::<HealthInfo>()
                .map_err(|e| ScoreError::Protocol {
                    field: "health",
                    detail: e.to_string(),
                })
        } else {
            Err(ScoreError::Backend {
                status,
                message: read_error_message(&mut resp),
            })
        }
    }

    fn post_json<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        request: &Req,
    ) -> Result<Resp, ScoreError> {
        let url = format!("{}{path}", self.base_url);
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let outcome = {
                let _permit = self.gate.acquire();
                self.agent.post(&url).send_json(request)
            };
            let retryable_detail = match outcome {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if (200..300).contains(&status) {
                        return resp.body_mut().read_json::<Resp>().map_err(|e| {
                            ScoreError::Protocol {
                                field: "body",
                                detail: format!("unparseable response: {e}"),
                            }
                        });
                    }
                    let message = read_error_message(&mut resp);
                    if status >= 500 {
                        format!("HTTP {status}: {message}")
                    } else {
                        return Err(ScoreError::Backend { status, message });
                    }
                }
                Err(e) => e.to_string(),
            };
            if attempt >= self.policy.max_attempts {
                return Err(ScoreError::Transport {
                    attempts: attempt,
                    detail: retryable_detail,
                });
            }
            let delay = self.policy.backoff_after(attempt);
            log::debug!("retrying {url} after {retryable_detail} (attempt {attempt}, backoff {delay:?})");
            std::thread::sleep(delay);
        }
    }
}

fn read_error_message(resp: &mut ureq::http::Response<ureq::Body>) -> String {
    match resp.body_mut().read_to_string() {
        Ok(text) => match serde_json::from_str::<ErrorBody>(&text) {
            Ok(body) => body.error,
            Err(_) => {
                let mut t = text;
                t.truncate(200);
                t
            }
        },
        Err(e) => format!("<unreadable body: {e}>"),
    }
}

impl ScoreBackend for RemoteBackend {
    fn score(&self, query: &ScoreQuery) -> Result<ScoreResult, ScoreError> {
        let result: ScoreResult = self.post_json("/v1/score", query)?;
        validate_score_result(&result)?;
        Ok(result)
    }

    fn descriptor(&self) -> String {
        self.base_url.clone()
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

impl EmbedBackend for RemoteBackend {
    fn embed(&self, text: &str) -> Result<EmbeddingResult, ScoreError> {
        let result: EmbeddingResult = self.post_json("/v1/embed", &EmbedRequest { text })?;
        validate_embedding_result(&result)?;
        Ok(result)
    }

    fn descriptor(&self) -> String {
        self.base_url.clone()
    }
}

pub struct RemoteBackendBuilder {
    endpoint: String,
    policy: RetryPolicy,
    max_in_flight: Option<usize>,
    timeout: Duration,
}

impl RemoteBackendBuilder {
    pub fn retry_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn max_in_flight(mut self, cap: Option<usize>) -> Self {
        self.max_in_flight = cap;
        self
    }

    pub fn timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn build(self) -> RemoteBackend {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(self.timeout))
            .build();
        RemoteBackend {
            agent: config.new_agent(),
            base_url: self.endpoint.trim_end_matches('/').to_string(),
            policy: self.policy,
            gate: InFlightGate::new(self.max_in_flight),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_per_failure() {
        let p = RetryPolicy {
            max_attempts: 4,
            base_backoff: Duration::from_millis(250),
        };
        assert_eq!(p.backoff_after(1), Duration::from_millis(250));
        assert_eq!(p.backoff_after(2), Duration::from_millis(500));
        assert_eq!(p.backoff_after(3), Duration::from_millis(1000));
    }

    #[test]
    fn gate_bounds_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let gate = InFlightGate::new(Some(2));
        let peak = Arc::new(AtomicUsize::new(0));
        let live = Arc::new(AtomicUsize::new(0));
        std::thread::scope(|s| {
            for _ in 0..8 {
                let gate = gate.clone();
                let peak = peak.clone();
                let live = live.clone();
                s.spawn(move || {
                    let _permit = gate.acquire();
                    let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    live.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn uncapped_gate_is_a_noop() {
        let gate = InFlightGate::new(None);
        let _a = gate.acquire();
        let _b = gate.acquire();
    }

    #[test]
    fn endpoint_trailing_slash_is_trimmed() {
        let b = RemoteBackend::new("http://127.0.0.1:9/");
        assert_eq!(b.endpoint(), "http://127.0.0.1:9");
    }
}
