//! Subcommand implementations and their shared plumbing.

pub mod attribute;
pub mod compare;
pub mod evaluate;
pub mod mock_server;
pub mod report;

use std::path::Path;
use std::time::Duration;

use ablate_core::corpus::{self, RulePair, Stoplist};
use ablate_core::scorer::{RemoteBackend, RetryPolicy};
use ablate_core::store;

use crate::error::CliError;

/// Load a corpus and the SHA-256 of its bytes (for the run manifest).
pub(crate) fn load_corpus_with_digest(path: &Path) -> Result<(Vec<RulePair>, String), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::data(format!("cannot read corpus {}: {e}", path.display())))?;
    let digest = store::sha256_hex(&bytes);
    let pairs = corpus::load_corpus(path)?;
    Ok((pairs, digest))
}

/// The stop-word list from a file, or the built-in default.
pub(crate) fn load_stoplist(path: Option<&Path>) -> Result<Stoplist, CliError> {
    match path {
        Some(p) => Ok(Stoplist::from_file(p)?),
        None => Ok(Stoplist::default_embedded()),
    }
}

pub(crate) struct RemoteSettings {
    pub timeout_ms: u64,
    pub retry_attempts: u32,
    pub retry_backoff_ms: u64,
    pub max_in_flight: Option<usize>,
}

impl Default for RemoteSettings {
    fn default() -> Self {
        RemoteSettings {
            timeout_ms: 30_000,
            retry_attempts: 3,
            retry_backoff_ms: 250,
            max_in_flight: None,
        }
    }
}

/// Build a wire-protocol client and verify the endpoint is healthy.
pub(crate) fn connect_remote(
    endpoint: &str,
    settings: RemoteSettings,
) -> Result<RemoteBackend, CliError> {
    let backend = RemoteBackend::builder(endpoint)
        .retry_policy(RetryPolicy {
            max_attempts: settings.retry_attempts,
            base_backoff: Duration::from_millis(settings.retry_backoff_ms),
        })
        .timeout(Duration::from_millis(settings.timeout_ms))
        .max_in_flight(settings.max_in_flight)
        .build();
    let health = backend.health()?;
    log::info!("endpoint {endpoint} healthy (model: {})", health.model);
    Ok(backend)
}

/// Pretty-printed JSON with a trailing newline, written atomically.
pub(crate) fn write_pretty_json<T: serde::Serialize>(
    path: &Path,
    value: &T,
) -> Result<(), CliError> {
    let mut body = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::data(format!("serialization failed: {e}")))?;
    body.push(b'\n');
    store::write_atomic(path, &body)?;
    Ok(())
}

/// RFC 3339 UTC creation timestamp; `ABLATE_CREATED_AT` overrides the
/// clock so runs can be byte-reproducible.
pub(crate) fn created_at() -> Result<String, CliError> {
    if let Ok(pinned) = std::env::var("ABLATE_CREATED_AT") {
        chrono::DateTime::parse_from_rfc3339(&pinned).map_err(|e| {
            CliError::usage(format!("ABLATE_CREATED_AT is not RFC 3339 ({pinned}): {e}"))
        })?;
        return Ok(pinned);
    }
    Ok(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}
