//! Deterministic in-process backends: an add-α unigram conditional
//! scorer and a hash-seeded embedding provider. Both exist so the whole
//! pipeline is testable, end to end and bit-for-bit, without a model
//! server.

use std::collections::{BTreeSet, HashMap};

use super::{
    EmbedBackend, EmbeddingResult, ScoreBackend, ScoreError, ScoreQuery, ScoreResult,
};

/// Add-α unigram conditional score: the target is tokenized by
/// whitespace into `t_1..t_m` and
///
/// ```text
/// token_log_prob[j] = ln( (c(t_j, context) + α) / (N + α·V) )
/// ```
///
/// where `c` counts whitespace-token occurrences of `t_j` in `context`,
/// `N` is the context's token count, and `V` is `vocab_size`. The total
/// is the sum. An empty context gives every token probability `1/V`.
///
/// `vocab_size` must cover every distinct token of context and target;
/// callers scoring ablated variants of a sample pass the vocabulary of
/// the original unablated sample so ablation changes the score only
/// through the removed word.
pub fn reference_score(
    context: &str,
    target: &str,
    alpha: f64,
    vocab_size: usize,
) -> Result<ScoreResult, ScoreError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(ScoreError::InvalidParameter {
            detail: format!("alpha must be a positive finite real, got {alpha}"),
        });
    }
    let target_tokens: Vec<&str> = target.split_whitespace().collect();
    if target_tokens.is_empty() {
        return Err(ScoreError::EmptyTarget);
    }
    let context_tokens: Vec<&str> = context.split_whitespace().collect();
    let distinct = distinct_token_count(context, target);
    if vocab_size < distinct {
        return Err(ScoreError::InvalidParameter {
            detail: format!(
                "vocab_size {vocab_size} is below the {distinct} distinct tokens of context and target"
            ),
        });
    }

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tok in &context_tokens {
        *counts.entry(tok).or_insert(0) += 1;
    }
    let n = context_tokens.len() as f64;
    let denom = n + alpha * vocab_size as f64;

    let mut token_log_probs = Vec::with_capacity(target_tokens.len());
    for tok in &target_tokens {
        let c = counts.get(tok).copied().unwrap_or(0) as f64;
        token_log_probs.push(((c + alpha) / denom).ln());
    }
    let log_prob = token_log_probs.iter().sum();
    Ok(ScoreResult {
        log_prob,
        token_log_probs,
        tokens: target_tokens.iter().map(|t| t.to_string()).collect(),
    })
}

/// Number of distinct whitespace tokens across `context` and `target`;
/// the natural per-sample vocabulary size for [`reference_score`].
pub fn distinct_token_count(context: &str, target: &str) -> usize {
    context
        .split_whitespace()
        .chain(target.split_whitespace())
        .collect::<BTreeSet<&str>>()
        .len()
}

/// The reference scoring backend. Queries that carry a `vocab_size` use
/// it; others fall back to the query's own distinct-token count, which
/// matches the mock server's behavior.
#[derive(Debug, Clone)]
pub struct ReferenceScorer {
    alpha: f64,
}

impl ReferenceScorer {
    pub fn new(alpha: f64) -> Result<Self, ScoreError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ScoreError::InvalidParameter {
                detail: format!("alpha must be a positive finite real, got {alpha}"),
            });
        }
        Ok(ReferenceScorer { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl ScoreBackend for ReferenceScorer {
    fn score(&self, query: &ScoreQuery) -> Result<ScoreResult, ScoreError> {
        let vocab = query
            .vocab_size
            .unwrap_or_else(|| distinct_token_count(&query.context, &query.target));
        reference_score(&query.context, &query.target, self.alpha, vocab)
    }

    fn descriptor(&self) -> String {
        "reference".to_string()
    }
}

// ---------------------------------------------------------------------------
// Mock embeddings
// ---------------------------------------------------------------------------

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

/// FNV-1a over the token's UTF-8 bytes; the per-token seed of the
/// embedding generator.
fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// splitmix64 step: advances the state and returns the next output.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Top 53 bits of `x` mapped uniformly onto [-1, 1).
fn signed_unit(x: u64) -> f64 {
    ((x >> 11) as f64) * (2.0 / (1u64 << 53) as f64) - 1.0
}

/// Deterministic unit-length embeddings: each token's vector comes from
/// seeding splitmix64 with the FNV-1a hash of its UTF-8 bytes, drawing
/// `dim` components in [-1, 1), and normalizing. Identical tokens map to
/// identical vectors on every run and platform.
pub fn mock_embed(tokens: &[&str], dim: usize) -> Result<EmbeddingResult, ScoreError> {
    if dim < 8 {
        return Err(ScoreError::InvalidParameter {
            detail: format!("embedding dimension must be at least 8, got {dim}"),
        });
    }
    let vectors = tokens
        .iter()
        .map(|tok| {
            let mut state = fnv1a_64(tok.as_bytes());
            let mut v: Vec<f64> = (0..dim).map(|_| signed_unit(splitmix64(&mut state))).collect();
            let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm == 0.0 {
                v[0] = 1.0;
            } else {
                for c in &mut v {
                    *c /= norm;
                }
            }
            v
        })
        .collect();
    Ok(EmbeddingResult {
        tokens: tokens.iter().map(|t| t.to_string()).collect(),
        vectors,
    })
}

/// Embedding backend over [`mock_embed`] with whitespace tokenization.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dim: usize,
}

impl MockEmbedder {
    pub const DEFAULT_DIM: usize = 64;

    pub fn new(dim: usize) -> Result<Self, ScoreError> {
        if dim < 8 {
            return Err(ScoreError::InvalidParameter {
                detail: format!("embedding dimension must be at least 8, got {dim}"),
            });
        }
        Ok(MockEmbedder { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl EmbedBackend for MockEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingResult, ScoreError> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        mock_embed(&tokens, self.dim)
    }

    fn descriptor(&self) -> String {
        format!("mock-embed(dim={})", self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::score;
    use proptest::prelude::*;

    #[test]
    fn two_token_context_single_target() {
        // (1 + 1) / (2 + 1·2) = 0.5
        let r = reference_score("a b", "a", 1.0, 2).unwrap();
        assert!((r.log_prob - 0.5f64.ln()).abs() < 1e-12);
        assert_eq!(r.tokens, vec!["a"]);
    }

    #[test]
    fn repeated_token_raises_probability() {
        // (1 + 1) / (1 + 1·2) = 2/3
        let r = reference_score("a", "a", 1.0, 2).unwrap();
        assert!((r.log_prob - (2.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_context_is_uniform_over_vocab() {
        let r = reference_score("", "a", 1.0, 2).unwrap();
        assert!((r.log_prob - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_target_errors() {
        assert!(matches!(
            reference_score("a", "", 1.0, 4),
            Err(ScoreError::EmptyTarget)
        ));
        assert!(matches!(
            reference_score("a", "  \t ", 1.0, 4),
            Err(ScoreError::EmptyTarget)
        ));
    }

    #[test]
    fn undersized_vocab_errors() {
        assert!(matches!(
            reference_score("a b c", "d", 1.0, 3),
            Err(ScoreError::InvalidParameter { .. })
        ));
    }

    #[test]
    fn non_positive_alpha_errors() {
        assert!(reference_score("a", "a", 0.0, 2).is_err());
        assert!(reference_score("a", "a", -1.0, 2).is_err());
        assert!(ReferenceScorer::new(0.0).is_err());
    }

    #[test]
    fn log_prob_is_token_sum() {
        let r = reference_score("a b c a", "a c a b", 0.5, 4).unwrap();
        let sum: f64 = r.token_log_probs.iter().sum();
        assert_eq!(r.log_prob, sum);
        assert_eq!(r.token_log_probs.len(), 4);
    }

    #[test]
    fn backend_is_deterministic() {
        let backend = ReferenceScorer::new(1.0).unwrap();
        let q = ScoreQuery::new("a b", "a");
        let r1 = score(&backend, &q).unwrap();
        let r2 = score(&backend, &q).unwrap();
        assert!((r1.log_prob - r2.log_prob).abs() < 1e-9);
        assert_eq!(r1, r2);
    }

    #[test]
    fn backend_honors_pinned_vocab() {
        let backend = ReferenceScorer::new(1.0).unwrap();
        // without pin: vocab 1 → (0+1)/(0+1) = 1 → ln 1 = 0
        let free = score(&backend, &ScoreQuery::new("", "a")).unwrap();
        assert_eq!(free.log_prob, 0.0);
        // pinned to the unablated sample's vocab of 2
        let pinned = score(&backend, &ScoreQuery::new("", "a").with_vocab_size(2)).unwrap();
        assert!((pinned.log_prob - 0.5f64.ln()).abs() < 1e-12);
    }

    proptest! {
        /// Bag-of-words property: context order never matters.
        #[test]
        fn context_permutation_invariance(
            mut ctx in proptest::collection::vec("[abcd]", 1..8),
            tgt in proptest::collection::vec("[abcd]", 1..4),
            seed in any::<u64>(),
        ) {
            let target = tgt.join(" ");
            let vocab = 8;
            let original = reference_score(&ctx.join(" "), &target, 1.0, vocab).unwrap();
            // deterministic shuffle
            let mut s = seed;
            for i in (1..ctx.len()).rev() {
                let j = (splitmix64(&mut s) % (i as u64 + 1)) as usize;
                ctx.swap(i, j);
            }
            let shuffled = reference_score(&ctx.join(" "), &target, 1.0, vocab).unwrap();
            prop_assert!((original.log_prob - shuffled.log_prob).abs() < 1e-9);
        }

        /// Removing a context token absent from the target strictly
        /// raises the score (denominator shrinks, numerators fixed).
        #[test]
        fn removing_foreign_context_token_increases_score(
            ctx in proptest::collection::vec("[ab]", 1..6),
            tgt in proptest::collection::vec("[ab]", 1..4),
        ) {
            let target = tgt.join(" ");
            let vocab = 8;
            let full = reference_score(&ctx.join(" "), &target, 1.0, vocab).unwrap();
            for i in 0..ctx.len() {
                if tgt.iter().any(|t| *t == ctx[i]) {
                    continue;
                }
                let mut reduced = ctx.clone();
                reduced.remove(i);
                let r = reference_score(&reduced.join(" "), &target, 1.0, vocab).unwrap();
                prop_assert!(r.log_prob > full.log_prob);
            }
        }
    }

    // Independent reimplementation of the embedding generator, kept
    // deliberately separate from the production code path.
    fn oracle_vector(token: &str, dim: usize) -> Vec<f64> {
        let mut h: u64 = 0xcbf29ce484222325;
        for &b in token.as_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
        let mut comps = Vec::with_capacity(dim);
        let mut state = h;
        for _ in 0..dim {
            state = state.wrapping_add(0x9E3779B97F4A7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            z ^= z >> 31;
            comps.push(((z >> 11) as f64) / 4503599627370496.0 - 1.0);
        }
        let norm = comps.iter().map(|c| c * c).sum::<f64>().sqrt();
        comps.iter().map(|c| c / norm).collect()
    }

    #[test]
    fn mock_embed_matches_independent_generator() {
        let r = mock_embed(&["if", "else", "4.3.11d"], 16).unwrap();
        for (tok, vec) in r.tokens.iter().zip(&r.vectors) {
            let expect = oracle_vector(tok, 16);
            assert_eq!(vec, &expect, "vector mismatch for token {tok}");
        }
    }

    #[test]
    fn identical_tokens_share_a_vector() {
        let r = mock_embed(&["if", "if"], 8).unwrap();
        assert_eq!(r.vectors[0], r.vectors[1]);
        let dot: f64 = r.vectors[0].iter().zip(&r.vectors[1]).map(|(a, b)| a * b).sum();
        assert!((dot - 1.0).abs() < 1e-9);
    }

    #[test]
    fn vectors_are_unit_length() {
        let r = mock_embed(&["pipe", "discharge", "2.2"], 64).unwrap();
        for v in &r.vectors {
            let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn distinct_tokens_are_not_collinear() {
        let r = mock_embed(&["if", "else"], 64).unwrap();
        let dot: f64 = r.vectors[0].iter().zip(&r.vectors[1]).map(|(a, b)| a * b).sum();
        assert!(dot < 1.0 - 1e-6);
    }

    #[test]
    fn small_dimension_is_rejected() {
        assert!(matches!(
            mock_embed(&["a"], 7),
            Err(ScoreError::InvalidParameter { .. })
        ));
        assert!(MockEmbedder::new(7).is_err());
        assert!(MockEmbedder::new(8).is_ok());
    }

    #[test]
    fn embedder_handles_empty_text() {
        let e = MockEmbedder::new(8).unwrap();
        let r = e.embed("").unwrap();
        assert!(r.tokens.is_empty());
        assert!(r.vectors.is_empty());
    }
}
