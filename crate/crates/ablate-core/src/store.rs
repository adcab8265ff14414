//! Persistence: run manifests, the content-addressed score cache, and
//! the on-disk run layout.
//!
//! Layout per run directory:
//! `manifest.json`, `attributions/<model_id>.jsonl`, `analysis.json`,
//! `evaluation.json`, `reports/*.html|*.svg`. The score cache lives in
//! its own tree: `<root>/<aa>/<bb>/<digest>.json`, one JSON file per
//! entry. All writes go through write-to-temp-then-rename so concurrent
//! writers and interrupts never leave partial files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::scorer::ScoreResult;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {detail}")]
    Parse { path: String, detail: String },
    #[error("integrity error: {artifact} digest mismatch (manifest {expected}, actual {actual})")]
    Integrity {
        artifact: String,
        expected: String,
        actual: String,
    },
}

/// SHA-256 of `bytes` as lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Write `bytes` to `path` atomically: a uniquely named temp file in the
/// same directory is renamed into place, so readers never observe a
/// partial file and concurrent writers of the same path both succeed
/// (last rename wins).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let io_err = |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(io_err)?;
    let tmp = dir.join(format!(
        ".tmp-{}-{}-{}",
        process::id(),
        TEMP_COUNTER.fetch_add(1, Ordering::Relaxed),
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    ));
    let mut file = fs::File::create(&tmp).map_err(io_err)?;
    file.write_all(bytes).map_err(io_err)?;
    file.sync_all().map_err(io_err)?;
    drop(file);
    fs::rename(&tmp, path).map_err(io_err)
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

/// One scoring backend as recorded in a manifest: `endpoint` is either a
/// URL or the literal `"reference"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: String,
    pub endpoint: String,
    #[serde(default)]
    pub parameters: serde_json::Map<String, serde_json::Value>,
}

/// Ties every output of a run to the exact inputs and settings that
/// produced it. Unknown fields from newer writers are preserved and
/// re-emitted on write.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    /// RFC 3339 UTC timestamp.
    pub created_at: String,
    /// SHA-256 hex of the corpus file bytes.
    pub corpus_digest: String,
    pub models: Vec<ModelSpec>,
    pub alpha: f64,
    /// SHA-256 hex of the stop-word list bytes.
    pub stopword_digest: String,
    pub parallelism: usize,
    pub tool_version: String,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl RunManifest {
    /// Check a referenced artifact's bytes against the recorded digest.
    pub fn verify_corpus(&self, corpus_bytes: &[u8]) -> Result<(), StoreError> {
        verify_digest("corpus", &self.corpus_digest, corpus_bytes)
    }

    pub fn verify_stopwords(&self, stopword_bytes: &[u8]) -> Result<(), StoreError> {
        verify_digest("stop-word list", &self.stopword_digest, stopword_bytes)
    }
}

fn verify_digest(artifact: &str, expected: &str, bytes: &[u8]) -> Result<(), StoreError> {
    let actual = sha256_hex(bytes);
    if actual == expected {
        Ok(())
    } else {
        Err(StoreError::Integrity {
            artifact: artifact.to_string(),
            expected: expected.to_string(),
            actual,
        })
    }
}

pub fn write_manifest(manifest: &RunManifest, dir: &Path) -> Result<PathBuf, StoreError> {
    let path = dir.join("manifest.json");
    let mut body = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    body.push(b'\n');
    write_atomic(&path, &body)?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, StoreError> {
    let bytes = fs::read(path).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|e| StoreError::Parse {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

// ---------------------------------------------------------------------------
// Run directory layout
// ---------------------------------------------------------------------------

/// Paths inside one run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// The run id is the directory's file name.
    pub fn run_id(&self) -> String {
        self.root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".to_string())
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn attribution_path(&self, model_id: &str) -> PathBuf {
        self.root
            .join("attributions")
            .join(format!("{}.jsonl", sanitize_component(model_id)))
    }

    pub fn analysis_path(&self) -> PathBuf {
        self.root.join("analysis.json")
    }

    pub fn evaluation_path(&self) -> PathBuf {
        self.root.join("evaluation.json")
    }

    pub fn report_path(&self, file_name: &str) -> PathBuf {
        self.root.join("reports").join(file_name)
    }
}

/// Keep model ids usable as file names.
fn sanitize_component(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Score cache
// ---------------------------------------------------------------------------

/// A content digest addressing one cached score (see
/// `attribution::score_cache_key` for the derivation).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey(String);

impl CacheKey {
    /// Build from a precomputed SHA-256 hex digest.
    pub fn from_hex(hex: String) -> Self {
        debug_assert!(hex.len() == 64 && hex.bytes().all(|b| b.is_ascii_hexdigit()));
        CacheKey(hex)
    }

    pub fn as_hex(&self) -> &str {
        &self.0
    }
}

/// File-per-entry score cache under a two-level hex-prefix tree.
/// Safe for concurrent multi-process use; corrupted entries are treated
/// as absent (and logged) so the cache self-heals on the next put.
#[derive(Debug, Clone)]
pub struct ScoreCache {
    root: PathBuf,
}

impl ScoreCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ScoreCache { root: root.into() }
    }

    fn entry_path(&self, key: &CacheKey) -> PathBuf {
        let hex = key.as_hex();
        self.root
            .join(&hex[0..2])
            .join(&hex[2..4])
            .join(format!("{hex}.json"))
    }

    /// Absent keys and unreadable entries both come back as `None`;
    /// a cache can never fail a run.
    pub fn get(&self, key: &CacheKey) -> Option<ScoreResult> {
        let path = self.entry_path(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                log::warn!("cache read failed for {}: {e}", path.display());
                return None;
            }
        };
        match serde_json::from_slice(&bytes) {
            Ok(result) => Some(result),
            Err(e) => {
                log::warn!(
                    "corrupted cache entry {} treated as absent: {e}",
                    path.display()
                );
                None
            }
        }
    }

    pub fn put(&self, key: &CacheKey, result: &ScoreResult) {
        let path = self.entry_path(key);
        let body = serde_json::to_vec(result).expect("score result serializes");
        if let Err(e) = write_atomic(&path, &body) {
            log::warn!("cache write failed for {}: {e}", path.display());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_result() -> ScoreResult {
        ScoreResult {
            log_prob: -1.5,
            token_log_probs: vec![-0.5, -1.0],
            tokens: vec!["a".into(), "b".into()],
        }
    }

    fn sample_manifest() -> RunManifest {
        RunManifest {
            run_id: "r1".into(),
            created_at: "2026-01-01T00:00:00Z".into(),
            corpus_digest: sha256_hex(b"corpus"),
            models: vec![ModelSpec {
                model_id: "ref".into(),
                endpoint: "reference".into(),
                parameters: serde_json::Map::from_iter([(
                    "alpha".to_string(),
                    serde_json::json!(1.0),
                )]),
            }],
            alpha: 1.0,
            stopword_digest: sha256_hex(b"stops"),
            parallelism: 4,
            tool_version: "0.1.0".into(),
            extra: serde_json::Map::new(),
        }
    }

    #[test]
    fn sha256_matches_known_vector() {
        // echo -n "abc" | sha256sum
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trips_field_for_field() {
        let dir = tempfile::tempdir().unwrap();
        let m = sample_manifest();
        let path = write_manifest(&m, dir.path()).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn manifest_preserves_unknown_fields() {
        let text = r#"{
            "run_id":"r1","created_at":"2026-01-01T00:00:00Z",
            "corpus_digest":"x","models":[],"alpha":1.0,
            "stopword_digest":"y","parallelism":1,"tool_version":"0.1.0",
            "future_field":{"nested":true}
        }"#;
        let m: RunManifest = serde_json::from_str(text).unwrap();
        assert_eq!(m.extra["future_field"]["nested"], serde_json::json!(true));
        let re = serde_json::to_string(&m).unwrap();
        assert!(re.contains("future_field"));
    }

    #[test]
    fn digest_verification_detects_edits() {
        let m = sample_manifest();
        assert!(m.verify_corpus(b"corpus").is_ok());
        let err = m.verify_corpus(b"corpus edited").unwrap_err();
        assert!(matches!(err, StoreError::Integrity { .. }));
        assert!(m.verify_stopwords(b"stops").is_ok());
        assert!(m.verify_stopwords(b"stops2").is_err());
    }

    #[test]
    fn cache_get_after_put_returns_identical_result() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ScoreCache::new(dir.path());
        let key = CacheKey::from_hex(sha256_hex(b"some key"));
        assert!(cache.get(&key).is_none());
        let result = sample_result();
        cache.put(&key, &result);
        assert_eq!(cache.get(&key), Some(result));
    }

    #[test]
    fn corrupted_cache_entry_is_absent() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ScoreCache::new(dir.path());
        let key = CacheKey::from_hex(sha256_hex(b"k"));
        cache.put(&key, &sample_result());
        // clobber the entry
        let hex = key.as_hex();
        let path = dir
            .path()
            .join(&hex[0..2])
            .join(&hex[2..4])
            .join(format!("{hex}.json"));
        fs::write(&path, b"{ not json").unwrap();
        assert!(cache.get(&key).is_none());
        // self-heals on next put
        cache.put(&key, &sample_result());
        assert!(cache.get(&key).is_some());
    }

    #[test]
    fn run_dir_layout() {
        let rd = RunDir::new("/tmp/runs/r9");
        assert_eq!(rd.run_id(), "r9");
        assert!(rd
            .attribution_path("fft")
            .ends_with("attributions/fft.jsonl"));
        assert!(rd
            .attribution_path("we/ird")
            .ends_with("attributions/we_ird.jsonl"));
        assert!(rd.report_path("heatmap.html").ends_with("reports/heatmap.html"));
    }
}
