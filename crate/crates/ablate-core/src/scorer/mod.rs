//! Scoring and embedding backends behind a uniform interface.
//!
//! A [`ScoreBackend`] answers the conditional log-probability query
//! `f(X) = log P(T | X)`; an [`EmbedBackend`] turns a script into token
//! embeddings. Two families ship here: the deterministic in-process
//! reference implementations ([`reference`]) and the wire-protocol
//! client for remote inference servers ([`remote`]). Every response is
//! validated against the result invariants before anything downstream
//! sees it.

use serde::{Deserialize, Serialize};

pub mod reference;
pub mod remote;

pub use reference::{mock_embed, reference_score, MockEmbedder, ReferenceScorer};
pub use remote::{RemoteBackend, RetryPolicy};

/// Absolute slack allowed between `log_prob` and the sum of
/// `token_log_probs` in a backend response.
pub const LOG_PROB_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("target must be non-empty")]
    EmptyTarget,
    #[error("invalid parameter: {detail}")]
    InvalidParameter { detail: String },
    #[error("transport failure after {attempts} attempt(s): {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("backend rejected request (HTTP {status}): {message}")]
    Backend { status: u16, message: String },
    #[error("protocol violation in field `{field}`: {detail}")]
    Protocol { field: &'static str, detail: String },
}

impl ScoreError {
    /// Transport-class failures (including 5xx) may be retried; backend
    /// rejections and protocol violations may not.
    pub fn is_retryable(&self) -> bool {
        matches!(self, ScoreError::Transport { .. })
    }
}

/// One conditional-probability query: score `target` given `context`.
/// `context` may be empty (full ablation of a one-word rule).
/// `vocab_size` pins the reference scorer's vocabulary to the original
/// unablated sample; backends that tokenize for themselves ignore it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreQuery {
    pub context: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_size: Option<usize>,
}

impl ScoreQuery {
    pub fn new(context: impl Into<String>, target: impl Into<String>) -> Self {
        ScoreQuery {
            context: context.into(),
            target: target.into(),
            vocab_size: None,
        }
    }

    pub fn with_vocab_size(mut self, vocab_size: usize) -> Self {
        self.vocab_size = Some(vocab_size);
        self
    }
}

/// A backend's answer: total target log-probability plus the per-token
/// breakdown under the backend's own tokenization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub log_prob: f64,
    pub token_log_probs: Vec<f64>,
    pub tokens: Vec<String>,
}

/// Token embeddings for a script: one vector per token, all the same
/// dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResult {
    pub tokens: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

pub trait ScoreBackend: Send + Sync {
    fn score(&self, query: &ScoreQuery) -> Result<ScoreResult, ScoreError>;
    /// Identity string for manifests and config digests: `"reference"`
    /// or the endpoint URL.
    fn descriptor(&self) -> String;
}

pub trait EmbedBackend: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingResult, ScoreError>;
    fn descriptor(&self) -> String;
}

/// Issue a query and validate the response invariants. This is the only
/// scoring entry point the attribution engine uses.
pub fn score(backend: &dyn ScoreBackend, query: &ScoreQuery) -> Result<ScoreResult, ScoreError> {
    if query.target.is_empty() {
        return Err(ScoreError::EmptyTarget);
    }
    let result = backend.score(query)?;
    validate_score_result(&result)?;
    Ok(result)
}

/// Embed a text and validate the response invariants.
pub fn embed(backend: &dyn EmbedBackend, text: &str) -> Result<EmbeddingResult, ScoreError> {
    let result = backend.embed(text)?;
    validate_embedding_result(&result)?;
    Ok(result)
}

/// Response invariants: token/log-prob lengths match, every value is
/// finite, and `log_prob` equals the token sum within
/// [`LOG_PROB_SUM_TOLERANCE`].
pub fn validate_score_result(result: &ScoreResult) -> Result<(), ScoreError> {
    if result.tokens.len() != result.token_log_probs.len() {
        return Err(ScoreError::Protocol {
            field: "token_log_probs",
            detail: format!(
                "{} tokens but {} token log-probs",
                result.tokens.len(),
                result.token_log_probs.len()
            ),
        });
    }
    if !result.log_prob.is_finite() {
        return Err(ScoreError::Protocol {
            field: "log_prob",
            detail: format!("non-finite value {}", result.log_prob),
        });
    }
    if let Some(bad) = result.token_log_probs.iter().find(|v| !v.is_finite()) {
        return Err(ScoreError::Protocol {
            field: "token_log_probs",
            detail: format!("non-finite value {bad}"),
        });
    }
    let sum: f64 = result.token_log_probs.iter().sum();
    if (result.log_prob - sum).abs() > LOG_PROB_SUM_TOLERANCE {
        return Err(ScoreError::Protocol {
            field: "log_prob",
            detail: format!(
                "log_prob {} differs from token sum {} by more than {}",
                result.log_prob, sum, LOG_PROB_SUM_TOLERANCE
            ),
        });
    }
    Ok(())
}

/// Response invariants: one vector per token, uniform dimension ≥ 1,
/// finite components, and no all-zero vector.
pub fn validate_embedding_result(result: &EmbeddingResult) -> Result<(), ScoreError> {
    if result.tokens.len() != result.vectors.len() {
        return Err(ScoreError::Protocol {
            field: "vectors",
            detail: format!(
                "{} tokens but {} vectors",
                result.tokens.len(),
                result.vectors.len()
            ),
        });
    }
    let dim = result.vectors.first().map(Vec::len);
    for (i, v) in result.vectors.iter().enumerate() {
        if Some(v.len()) != dim || v.is_empty() {
            return Err(ScoreError::Protocol {
                field: "vectors",
                detail: format!("vector {i} has dimension {}, expected {dim:?}", v.len()),
            });
        }
        if v.iter().any(|c| !c.is_finite()) {
            return Err(ScoreError::Protocol {
                field: "vectors",
                detail: format!("vector {i} has non-finite components"),
            });
        }
        if v.iter().all(|c| *c == 0.0) {
            return Err(ScoreError::Protocol {
                field: "vectors",
                detail: format!("vector {i} is all-zero"),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_rejects_empty_target() {
        let backend = ReferenceScorer::new(1.0).unwrap();
        let err = score(&backend, &ScoreQuery::new("a b", "")).unwrap_err();
        assert!(matches!(err, ScoreError::EmptyTarget));
    }

    #[test]
    fn validation_rejects_length_mismatch() {
        let bad = ScoreResult {
            log_prob: -1.0,
            token_log_probs: vec![-1.0],
            tokens: vec!["a".into(), "b".into()],
        };
        let err = validate_score_result(&bad).unwrap_err();
        match err {
            ScoreError::Protocol { field, .. } => assert_eq!(field, "token_log_probs"),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn validation_rejects_sum_mismatch() {
        let bad = ScoreResult {
            log_prob: -1.0,
            token_log_probs: vec![-0.45, -0.45],
            tokens: vec!["a".into(), "b".into()],
        };
        let err = validate_score_result(&bad).unwrap_err();
        match err {
            ScoreError::Protocol { field, .. } => assert_eq!(field, "log_prob"),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn validation_accepts_sum_within_tolerance() {
        let ok = ScoreResult {
            log_prob: -0.9000005,
            token_log_probs: vec![-0.45, -0.45],
            tokens: vec!["a".into(), "b".into()],
        };
        assert!(validate_score_result(&ok).is_ok());
    }

    #[test]
    fn embedding_validation_rejects_mismatch_and_zero_vectors() {
        let mismatch = EmbeddingResult {
            tokens: vec!["a".into()],
            vectors: vec![],
        };
        assert!(matches!(
            validate_embedding_result(&mismatch),
            Err(ScoreError::Protocol { field: "vectors", .. })
        ));
        let zeroed = EmbeddingResult {
            tokens: vec!["a".into()],
            vectors: vec![vec![0.0, 0.0]],
        };
        assert!(validate_embedding_result(&zeroed).is_err());
    }

    #[test]
    fn query_serialization_omits_absent_vocab() {
        let q = ScoreQuery::new("a b", "a");
        assert_eq!(
            serde_json::to_string(&q).unwrap(),
            r#"{"context":"a b","target":"a"}"#
        );
        let q = q.with_vocab_size(5);
        assert_eq!(
            serde_json::to_string(&q).unwrap(),
            r#"{"context":"a b","target":"a","vocab_size":5}"#
        );
    }
}
