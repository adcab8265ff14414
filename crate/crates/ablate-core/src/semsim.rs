//! Semantic similarity between generated and reference scripts via
//! greedy embedding matching.
//!
//! Each generated token matches its maximum-cosine counterpart among
//! the reference tokens and vice versa; the means give precision (over
//! generated tokens) and recall (over reference tokens), aggregated as
//! F_β = (1+β²)·P·R / (β²·P + R). β > 1 weights recall; β = 1 is the
//! harmonic mean F1. Tokenization is owned by the embedding backend —
//! this module never re-tokenizes scripts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::{box_stats, BoxSummary};
use crate::corpus::RulePair;
use crate::exec;
use crate::scorer::{self, EmbedBackend, ScoreError};

#[derive(Debug, thiserror::Error)]
pub enum SemSimError {
    #[error("no vectors for the {side} script")]
    EmptySide { side: &'static str },
    #[error("embedding dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("beta must be a positive finite real, got {beta}")]
    InvalidBeta { beta: f64 },
    #[error("sample \"{sample_id}\" has no generated script for model \"{model_id}\"")]
    MissingGenerated { sample_id: String, model_id: String },
    #[error("embedding backend failed: {0}")]
    Backend(#[from] ScoreError),
    #[error("{} sample evaluation(s) failed, exceeding the threshold of {threshold}", failures.len())]
    TooManyFailures {
        failures: Vec<SemSimError>,
        threshold: usize,
    },
    #[error("evaluation failed for sample \"{sample_id}\", model \"{model_id}\": {source}")]
    SampleFailed {
        sample_id: String,
        model_id: String,
        source: Box<SemSimError>,
    },
    #[error("summary failed: {0}")]
    Summary(#[from] crate::analysis::AnalysisError),
}

/// Greedy-matching similarity of one generated/reference script pair.
/// `f1` and `f_beta` are absent when their denominators are not
/// positive (e.g. orthogonal token sets give P = R = 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemSimScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: Option<f64>,
    pub f_beta: Option<f64>,
    pub beta: f64,
    pub n_gen_tokens: usize,
    pub n_ref_tokens: usize,
}

/// Greedy matching over two non-empty vector lists of equal dimension:
/// P = mean over generated vectors of the best cosine against the
/// reference side, R the same with sides swapped.
pub fn greedy_match(
    gen_vectors: &[Vec<f64>],
    ref_vectors: &[Vec<f64>],
    beta: f64,
) -> Result<SemSimScore, SemSimError> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(SemSimError::InvalidBeta { beta });
    }
    if gen_vectors.is_empty() {
        return Err(SemSimError::EmptySide { side: "generated" });
    }
    if ref_vectors.is_empty() {
        return Err(SemSimError::EmptySide { side: "reference" });
    }
    let dim = gen_vectors[0].len();
    for v in gen_vectors.iter().chain(ref_vectors.iter()) {
        if v.len() != dim {
            return Err(SemSimError::DimensionMismatch {
                left: dim,
                right: v.len(),
            });
        }
    }

    let precision = mean_best_cosine(gen_vectors, ref_vectors);
    let recall = mean_best_cosine(ref_vectors, gen_vectors);
    Ok(SemSimScore {
        precision,
        recall,
        f1: f_beta(precision, recall, 1.0),
        f_beta: f_beta(precision, recall, beta),
        beta,
        n_gen_tokens: gen_vectors.len(),
        n_ref_tokens: ref_vectors.len(),
    })
}

fn mean_best_cosine(from: &[Vec<f64>], against: &[Vec<f64>]) -> f64 {
    let sum: f64 = from
        .iter()
        .map(|u| {
            against
                .iter()
                .map(|v| cosine(u, v))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    sum / from.len() as f64
}

fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v.iter()) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    let denom = nu.sqrt() * nv.sqrt();
    if denom == 0.0 {
        0.0
    } else {
        dot / denom
    }
}

/// F_β when the denominator is positive, `None` otherwise.
fn f_beta(precision: f64, recall: f64, beta: f64) -> Option<f64> {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom > 0.0 {
        Some((1.0 + b2) * precision * recall / denom)
    } else {
        None
    }
}

/// Embed one sample's generated and reference scripts and score them.
pub fn evaluate_pair(
    pair: &RulePair,
    model_id: &str,
    backend: &dyn EmbedBackend,
    beta: f64,
) -> Result<SemSimScore, SemSimError> {
    let generated = pair
        .generated_scripts
        .get(model_id)
        .ok_or_else(|| SemSimError::MissingGenerated {
            sample_id: pair.id.clone(),
            model_id: model_id.to_string(),
        })?;
    let gen_embedding = scorer::embed(backend, generated)?;
    let ref_embedding = scorer::embed(backend, &pair.reference_script)?;
    greedy_match(&gen_embedding.vectors, &ref_embedding.vectors, beta)
}

/// One sample's scores in a corpus evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub sample_id: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: Option<f64>,
    pub f_beta: Option<f64>,
}

/// Per-model evaluation: per-sample scores in corpus order plus box
/// summaries over the defined F1 / F_β values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub model_id: String,
    pub samples: Vec<SampleScore>,
    pub box_f1: BoxSummary,
    pub box_fbeta: BoxSummary,
}

/// The full evaluation document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEvaluation {
    pub beta: f64,
    pub models: Vec<ModelEvaluation>,
}

/// Evaluate every (sample, model) combination. Samples evaluate in
/// parallel up to `parallelism`; failures are collected and the run
/// fails only when their count exceeds `max_failures`.
pub fn evaluate_corpus(
    corpus: &[RulePair],
    model_ids: &[String],
    backend: &dyn EmbedBackend,
    beta: f64,
    parallelism: usize,
    max_failures: usize,
) -> Result<(CorpusEvaluation, Vec<SemSimError>), SemSimError> {
    let jobs: Vec<(usize, &RulePair, &String)> = model_ids
        .iter()
        .flat_map(|m| corpus.iter().enumerate().map(move |(i, p)| (i, p, m)))
        .collect();
    let parallel = parallelism > 1;
    let results = exec::run_scoped(parallelism, || {
        exec::map_ordered(&jobs, parallel, |(_, pair, model_id)| {
            evaluate_pair(pair, model_id, backend, beta).map_err(|source| {
                SemSimError::SampleFailed {
                    sample_id: pair.id.clone(),
                    model_id: (*model_id).clone(),
                    source: Box::new(source),
                }
            })
        })
    });

    let mut per_model: BTreeMap<&String, Vec<SampleScore>> = BTreeMap::new();
    let mut failures = Vec::new();
    for ((_, pair, model_id), result) in jobs.iter().zip(results) {
        match result {
            Ok(score) => per_model.entry(model_id).or_default().push(SampleScore {
                sample_id: pair.id.clone(),
                precision: score.precision,
                recall: score.recall,
                f1: score.f1,
                f_beta: score.f_beta,
            }),
            Err(e) => failures.push(e),
        }
    }
    if failures.len() > max_failures {
        return Err(SemSimError::TooManyFailures {
            failures,
            threshold: max_failures,
        });
    }

    let mut models = Vec::new();
    for model_id in model_ids {
        let samples = per_model.remove(model_id).unwrap_or_default();
        let f1_values: Vec<f64> = samples.iter().filter_map(|s| s.f1).collect();
        let fbeta_values: Vec<f64> = samples.iter().filter_map(|s| s.f_beta).collect();
        models.push(ModelEvaluation {
            model_id: model_id.clone(),
            box_f1: box_stats(&f1_values)?,
            box_fbeta: box_stats(&fbeta_values)?,
            samples,
        });
    }
    Ok((CorpusEvaluation { beta, models }, failures))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::MockEmbedder;
    use proptest::prelude::*;

    fn one_hot(i: usize, dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    fn pair_with(id: &str, rule: &str, reference: &str, gens: &[(&str, &str)]) -> RulePair {
        RulePair {
            id: id.into(),
            rule_text: rule.into(),
            reference_script: reference.into(),
            generated_scripts: gens
                .iter()
                .map(|(m, s)| (m.to_string(), s.to_string()))
                .collect(),
            tags: vec![],
        }
    }

    #[test]
    fn identical_lists_score_one() {
        let vs = vec![one_hot(0, 8), one_hot(3, 8)];
        let s = greedy_match(&vs, &vs, 3.0).unwrap();
        assert!((s.precision - 1.0).abs() < 1e-12);
        assert!((s.recall - 1.0).abs() < 1e-12);
        assert!((s.f1.unwrap() - 1.0).abs() < 1e-12);
        assert!((s.f_beta.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn f3_formula_hand_value() {
        // P = 0.5, R = 1.0 → F3 = 10·0.5 / (9·0.5 + 1) = 5/5.5
        let s = f_beta(0.5, 1.0, 3.0).unwrap();
        assert!((s - 0.9090909090909091).abs() < 1e-9);
        assert!((f_beta(0.5, 1.0, 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_sets_leave_fbeta_undefined() {
        let gen: Vec<Vec<f64>> = (0..2).map(|i| one_hot(i, 8)).collect();
        let reference: Vec<Vec<f64>> = (4..6).map(|i| one_hot(i, 8)).collect();
        let s = greedy_match(&gen, &reference, 3.0).unwrap();
        assert_eq!(s.precision, 0.0);
        assert_eq!(s.recall, 0.0);
        assert_eq!(s.f1, None);
        assert_eq!(s.f_beta, None);
    }

    #[test]
    fn empty_sides_error() {
        let vs = vec![one_hot(0, 8)];
        assert!(matches!(
            greedy_match(&[], &vs, 1.0),
            Err(SemSimError::EmptySide { side: "generated" })
        ));
        assert!(matches!(
            greedy_match(&vs, &[], 1.0),
            Err(SemSimError::EmptySide { side: "reference" })
        ));
    }

    #[test]
    fn swap_exchanges_precision_and_recall_exactly() {
        let embedder = MockEmbedder::new(32).unwrap();
        let a = embedder.embed("check_pipe ( ) limit 500").unwrap().vectors;
        let b = embedder.embed("limit = 500 assert check").unwrap().vectors;
        let fwd = greedy_match(&a, &b, 3.0).unwrap();
        let rev = greedy_match(&b, &a, 3.0).unwrap();
        assert_eq!(fwd.precision, rev.recall);
        assert_eq!(fwd.recall, rev.precision);
        assert_eq!(fwd.f1, rev.f1);
    }

    #[test]
    fn token_multiset_equality_gives_all_ones() {
        let embedder = MockEmbedder::new(16).unwrap();
        let a = embedder.embed("a b c a").unwrap().vectors;
        let b = embedder.embed("c a a b").unwrap().vectors;
        let s = greedy_match(&a, &b, 3.0).unwrap();
        assert!((s.precision - 1.0).abs() < 1e-9);
        assert!((s.recall - 1.0).abs() < 1e-9);
        assert!((s.f1.unwrap() - 1.0).abs() < 1e-9);
        assert!((s.f_beta.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn f_beta_approaches_recall_as_beta_grows() {
        let (p, r) = (0.4, 0.9);
        let mut last_gap = f64::INFINITY;
        for beta in [1.0, 3.0, 10.0, 100.0] {
            let f = f_beta(p, r, beta).unwrap();
            let gap = (f - r).abs();
            assert!(gap < last_gap, "F_beta should approach R as beta grows");
            last_gap = gap;
        }
        assert!(last_gap < 1e-3);
    }

    proptest! {
        #[test]
        fn f_beta_lies_between_p_and_r(p in 0.01f64..1.0, r in 0.01f64..1.0, beta in 0.1f64..20.0) {
            let f = f_beta(p, r, beta).unwrap();
            let (lo, hi) = (p.min(r), p.max(r));
            prop_assert!(f >= lo - 1e-12 && f <= hi + 1e-12);
        }

        #[test]
        fn f1_is_harmonic_mean(p in 0.01f64..1.0, r in 0.01f64..1.0) {
            let f1 = f_beta(p, r, 1.0).unwrap();
            prop_assert_eq!(f1, 2.0 * p * r / (p + r));
        }
    }

    #[test]
    fn evaluate_pair_on_identical_scripts() {
        let embedder = MockEmbedder::new(16).unwrap();
        let pair = pair_with("s1", "rule", "x = 1", &[("fft", "x = 1")]);
        let s = evaluate_pair(&pair, "fft", &embedder, 3.0).unwrap();
        assert!((s.f1.unwrap() - 1.0).abs() < 1e-9);
        assert!((s.f_beta.unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(s.n_gen_tokens, 3);
        assert_eq!(s.n_ref_tokens, 3);
    }

    #[test]
    fn missing_model_is_named() {
        let embedder = MockEmbedder::new(16).unwrap();
        let pair = pair_with("s1", "rule", "x = 1", &[]);
        match evaluate_pair(&pair, "fft", &embedder, 3.0).unwrap_err() {
            SemSimError::MissingGenerated { model_id, .. } => assert_eq!(model_id, "fft"),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn empty_generated_script_errors() {
        let embedder = MockEmbedder::new(16).unwrap();
        let pair = pair_with("s1", "rule", "x = 1", &[("fft", "  ")]);
        assert!(matches!(
            evaluate_pair(&pair, "fft", &embedder, 3.0),
            Err(SemSimError::EmptySide { side: "generated" })
        ));
    }

    #[test]
    fn corpus_evaluation_counts_and_parallelism() {
        let embedder = MockEmbedder::new(16).unwrap();
        let corpus = vec![
            pair_with("s1", "r", "a b", &[("m1", "a b"), ("m2", "b z")]),
            pair_with("s2", "r", "c d", &[("m1", "c d"), ("m2", "c q")]),
            pair_with("s3", "r", "e", &[("m1", "e"), ("m2", "e")]),
        ];
        let models = vec!["m1".to_string(), "m2".to_string()];
        let (seq, fails) = evaluate_corpus(&corpus, &models, &embedder, 3.0, 1, 0).unwrap();
        assert!(fails.is_empty());
        let (par, _) = evaluate_corpus(&corpus, &models, &embedder, 3.0, 8, 0).unwrap();
        assert_eq!(seq, par);
        assert_eq!(seq.models.len(), 2);
        assert_eq!(seq.models[0].samples.len(), 3);
        assert_eq!(seq.models[0].samples[0].sample_id, "s1");
        // m1 generated == reference everywhere → degenerate boxes at 1.0
        assert_eq!(seq.models[0].box_f1.median, seq.models[0].box_f1.q1);
        assert!((seq.models[0].box_f1.median - 1.0).abs() < 1e-9);
    }

    #[test]
    fn corpus_evaluation_failure_threshold() {
        let embedder = MockEmbedder::new(16).unwrap();
        let corpus = vec![
            pair_with("s1", "r", "a", &[("m1", "a")]),
            pair_with("s2", "r", "b", &[]), // m1 missing
        ];
        let models = vec!["m1".to_string()];
        assert!(matches!(
            evaluate_corpus(&corpus, &models, &embedder, 3.0, 1, 0),
            Err(SemSimError::TooManyFailures { .. })
        ));
        let (eval, failures) = evaluate_corpus(&corpus, &models, &embedder, 3.0, 1, 1).unwrap();
        assert_eq!(failures.len(), 1);
        assert_eq!(eval.models[0].samples.len(), 1);
    }

    #[test]
    fn evaluation_document_shape() {
        let embedder = MockEmbedder::new(16).unwrap();
        let corpus = vec![pair_with("s1", "r", "a b", &[("m1", "a b")])];
        let (eval, _) =
            evaluate_corpus(&corpus, &["m1".to_string()], &embedder, 3.0, 1, 0).unwrap();
        let json = serde_json::to_value(&eval).unwrap();
        assert_eq!(json["beta"], 3.0);
        assert!(json["models"][0]["model_id"].is_string());
        assert!(json["models"][0]["samples"][0]["precision"].is_number());
        assert!(json["models"][0]["box_f1"]["median"].is_number());
        assert!(json["models"][0]["box_fbeta"]["median"].is_number());
    }
}
