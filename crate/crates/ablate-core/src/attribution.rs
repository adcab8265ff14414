//! Word-level feature-ablation attribution.
//!
//! For a rule segmented into words `w_1..w_d`, the engine scores the
//! target once against the full (canonically joined) rule, then once
//! per non-stop word with that word removed, and records
//!
//! ```text
//! score_i = f(full context) − f(context without w_i)
//! ```
//!
//! Positive scores mean the word raised the backend's confidence in the
//! target; negative scores mean it hindered it; near-zero scores mean
//! negligible effect. Stop words are excluded from ablation and carry
//! no score. A sample costs `d + 1` backend calls, shared across all
//! ablations, all cacheable and safe to issue concurrently.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{tokenize_rule, RulePair, Stoplist, WordToken};
use crate::exec;
use crate::scorer::{self, reference::distinct_token_count, ScoreBackend, ScoreError, ScoreQuery};
use crate::store::{CacheKey, ScoreCache};

#[derive(Debug, thiserror::Error)]
pub enum AttributionError {
    #[error("rule \"{sample_id}\" segments to zero words")]
    EmptyRule { sample_id: String },
    #[error("ablation index {index} out of range for {len} token(s)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("scoring failed for sample \"{sample_id}\"{}: {source}", word_position(.word_index))]
    SampleFailed {
        sample_id: String,
        /// `None` when the base (unablated) scoring call failed.
        word_index: Option<usize>,
        source: ScoreError,
    },
    #[error("{} sample(s) failed, exceeding the threshold of {threshold}", failures.len())]
    TooManyFailures {
        failures: Vec<AttributionError>,
        threshold: usize,
    },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid attribution record on line {line}: {detail}")]
    InvalidRecord { line: usize, detail: String },
}

fn word_position(word_index: &Option<usize>) -> String {
    match word_index {
        Some(i) => format!(" at word index {i}"),
        None => " on the base scoring call".to_string(),
    }
}

/// One word's attribution: `score` is present iff the word was ablated
/// (stop words are excluded and carry no score).
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionEntry {
    pub word: String,
    pub index: usize,
    pub score: Option<f64>,
}

impl AttributionEntry {
    pub fn excluded(&self) -> bool {
        self.score.is_none()
    }
}

/// Attribution of one (sample, model) pair: the base log-probability
/// and one entry per word of the rule, in word order.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionRecord {
    pub sample_id: String,
    pub model_id: String,
    pub base_log_prob: f64,
    pub config_digest: String,
    pub entries: Vec<AttributionEntry>,
}

impl AttributionRecord {
    /// The ordered scores of non-excluded entries: the attribution
    /// vector the analysis module compares across models.
    pub fn score_vector(&self) -> Vec<f64> {
        self.entries.iter().filter_map(|e| e.score).collect()
    }
}

/// Remove the word at `index` and rejoin the remaining words with
/// single spaces. The base context is the same join over all words, so
/// base and ablated contexts differ only by the removed word.
pub fn ablate_input(tokens: &[WordToken], index: usize) -> Result<String, AttributionError> {
    if index >= tokens.len() {
        return Err(AttributionError::IndexOutOfRange {
            index,
            len: tokens.len(),
        });
    }
    Ok(tokens
        .iter()
        .filter(|t| t.index != index)
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" "))
}

/// Canonical base context: all words joined by single spaces.
pub fn joined_context(tokens: &[WordToken]) -> String {
    tokens
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Content digest addressing one scoring call:
/// `SHA-256(model_id ‖ 0x00 ‖ context ‖ 0x00 ‖ target)`.
pub fn score_cache_key(model_id: &str, context: &str, target: &str) -> CacheKey {
    let mut hasher = Sha256::new();
    hasher.update(model_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(context.as_bytes());
    hasher.update([0u8]);
    hasher.update(target.as_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    CacheKey::from_hex(hex)
}

/// Engine settings. `alpha` is recorded in the config digest and
/// manifest; the backend itself owns how it is applied.
#[derive(Debug, Clone)]
pub struct AttributionConfig {
    pub model_id: String,
    pub alpha: f64,
    pub parallelism: usize,
    pub max_failures: usize,
}

impl AttributionConfig {
    pub fn new(model_id: impl Into<String>) -> Self {
        AttributionConfig {
            model_id: model_id.into(),
            alpha: 1.0,
            parallelism: 1,
            max_failures: 0,
        }
    }
}

/// Successful corpus run: one record per succeeded sample in corpus
/// order, plus any failures that stayed within the threshold.
#[derive(Debug)]
pub struct BatchOutcome {
    pub records: Vec<AttributionRecord>,
    pub failures: Vec<AttributionError>,
}

/// Binds a backend, stop list, config, and optional cache into the
/// attribution pipeline.
pub struct AttributionEngine<'a> {
    backend: &'a dyn ScoreBackend,
    stoplist: &'a Stoplist,
    config: AttributionConfig,
    cache: Option<&'a ScoreCache>,
    config_digest: String,
}

impl<'a> AttributionEngine<'a> {
    pub fn new(
        backend: &'a dyn ScoreBackend,
        stoplist: &'a Stoplist,
        config: AttributionConfig,
    ) -> Self {
        let config_digest = config_digest(config.alpha, &backend.descriptor(), stoplist.digest());
        AttributionEngine {
            backend,
            stoplist,
            config,
            cache: None,
            config_digest,
        }
    }

    pub fn with_cache(mut self, cache: &'a ScoreCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    /// Attribute a single sample: `d + 1` scoring calls (one base plus
    /// one per non-stop word), issued concurrently up to the configured
    /// parallelism. No partial record is ever produced: any failed call
    /// fails the sample, identifying the word it was ablating.
    pub fn attribute_sample(&self, pair: &RulePair) -> Result<AttributionRecord, AttributionError> {
        exec::run_scoped(self.config.parallelism, || {
            self.attribute_sample_inner(pair, self.config.parallelism > 1)
        })
    }

    fn attribute_sample_inner(
        &self,
        pair: &RulePair,
        parallel: bool,
    ) -> Result<AttributionRecord, AttributionError> {
        let tokens = tokenize_rule(&pair.rule_text, self.stoplist);
        if tokens.is_empty() {
            return Err(AttributionError::EmptyRule {
                sample_id: pair.id.clone(),
            });
        }
        let base_context = joined_context(&tokens);
        let vocab_size = distinct_token_count(&base_context, &pair.reference_script);

        // job 0 is the base query; the rest ablate one word each
        let mut jobs: Vec<(Option<usize>, ScoreQuery)> = Vec::with_capacity(tokens.len() + 1);
        jobs.push((
            None,
            ScoreQuery::new(base_context.clone(), pair.reference_script.clone())
                .with_vocab_size(vocab_size),
        ));
        for token in &tokens {
            if token.is_stopword {
                continue;
            }
            let context = ablate_input(&tokens, token.index)?;
            jobs.push((
                Some(token.index),
                ScoreQuery::new(context, pair.reference_script.clone())
                    .with_vocab_size(vocab_size),
            ));
        }

        let results = exec::map_ordered(&jobs, parallel, |(word_index, query)| {
            self.scored(query).map_err(|source| (*word_index, source))
        });

        let mut scored = Vec::with_capacity(results.len());
        for result in results {
            match result {
                Ok(r) => scored.push(r),
                Err((word_index, source)) => {
                    return Err(AttributionError::SampleFailed {
                        sample_id: pair.id.clone(),
                        word_index,
                        source,
                    })
                }
            }
        }

        let base_log_prob = scored[0].log_prob;
        let mut ablated = scored.into_iter().skip(1);
        let entries = tokens
            .iter()
            .map(|token| AttributionEntry {
                word: token.text.clone(),
                index: token.index,
                score: if token.is_stopword {
                    None
                } else {
                    let result = ablated.next().expect("one result per non-stop word");
                    Some(base_log_prob - result.log_prob)
                },
            })
            .collect();

        Ok(AttributionRecord {
            sample_id: pair.id.clone(),
            model_id: self.config.model_id.clone(),
            base_log_prob,
            config_digest: self.config_digest.clone(),
            entries,
        })
    }

    /// Attribute a whole corpus. Output order matches corpus order
    /// regardless of internal parallelism. Per-sample failures are
    /// collected; the run fails only when their count exceeds
    /// `max_failures`.
    pub fn attribute_corpus(&self, corpus: &[RulePair]) -> Result<BatchOutcome, AttributionError> {
        let parallel = self.config.parallelism > 1;
        let results = exec::run_scoped(self.config.parallelism, || {
            exec::map_ordered(corpus, parallel, |pair| {
                self.attribute_sample_inner(pair, parallel)
            })
        });
        let mut records = Vec::with_capacity(results.len());
        let mut failures = Vec::new();
        for result in results {
            match result {
                Ok(record) => records.push(record),
                Err(e) => failures.push(e),
            }
        }
        if failures.len() > self.config.max_failures {
            return Err(AttributionError::TooManyFailures {
                failures,
                threshold: self.config.max_failures,
            });
        }
        Ok(BatchOutcome { records, failures })
    }

    /// Cache-through scoring; cached results are byte-identical to
    /// fresh ones, so warm reruns reproduce outputs exactly.
    fn scored(&self, query: &ScoreQuery) -> Result<scorer::ScoreResult, ScoreError> {
        let key = score_cache_key(&self.config.model_id, &query.context, &query.target);
        if let Some(cache) = self.cache {
            if let Some(hit) = cache.get(&key) {
                return Ok(hit);
            }
        }
        let result = scorer::score(self.backend, query)?;
        if let Some(cache) = self.cache {
            cache.put(&key, &result);
        }
        Ok(result)
    }
}

/// Digest of the settings that determine scores: α, backend identity,
/// and the stop-word list digest.
pub fn config_digest(alpha: f64, backend_descriptor: &str, stopword_digest: &str) -> String {
    let canonical = serde_json::json!({
        "alpha": alpha,
        "backend": backend_descriptor,
        "stopwords": stopword_digest,
    });
    crate::store::sha256_hex(canonical.to_string().as_bytes())
}

// ---------------------------------------------------------------------------
// JSONL wire format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct WireRecord {
    sample_id: String,
    model_id: String,
    base_log_prob: f64,
    config_digest: String,
    words: Vec<WireEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WireEntry {
    Scored { w: String, i: usize, score: f64 },
    Excluded { w: String, i: usize, excluded: bool },
}

fn to_wire(record: &AttributionRecord) -> WireRecord {
    WireRecord {
        sample_id: record.sample_id.clone(),
        model_id: record.model_id.clone(),
        base_log_prob: record.base_log_prob,
        config_digest: record.config_digest.clone(),
        words: record
            .entries
            .iter()
            .map(|e| match e.score {
                Some(score) => WireEntry::Scored {
                    w: e.word.clone(),
                    i: e.index,
                    score,
                },
                None => WireEntry::Excluded {
                    w: e.word.clone(),
                    i: e.index,
                    excluded: true,
                },
            })
            .collect(),
    }
}

fn from_wire(wire: WireRecord, line: usize) -> Result<AttributionRecord, AttributionError> {
    let mut entries = Vec::with_capacity(wire.words.len());
    for (pos, w) in wire.words.into_iter().enumerate() {
        let entry = match w {
            WireEntry::Scored { w, i, score } => {
                if !score.is_finite() {
                    return Err(AttributionError::InvalidRecord {
                        line,
                        detail: format!("non-finite score for word {i}"),
                    });
                }
                AttributionEntry {
                    word: w,
                    index: i,
                    score: Some(score),
                }
            }
            WireEntry::Excluded { w, i, excluded } => {
                if !excluded {
                    return Err(AttributionError::InvalidRecord {
                        line,
                        detail: format!("word {i} has neither a score nor excluded=true"),
                    });
                }
                AttributionEntry {
                    word: w,
                    index: i,
                    score: None,
                }
            }
        };
        if entry.index != pos {
            return Err(AttributionError::InvalidRecord {
                line,
                detail: format!("word index {} at position {pos}; records must cover every word in order", entry.index),
            });
        }
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(AttributionError::InvalidRecord {
            line,
            detail: "record has no words".to_string(),
        });
    }
    Ok(AttributionRecord {
        sample_id: wire.sample_id,
        model_id: wire.model_id,
        base_log_prob: wire.base_log_prob,
        config_digest: wire.config_digest,
        entries,
    })
}

pub fn write_jsonl<W: Write>(records: &[AttributionRecord], out: &mut W) -> std::io::Result<()> {
    for record in records {
        let line = serde_json::to_string(&to_wire(record)).expect("record serializes");
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn jsonl_bytes(records: &[AttributionRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_jsonl(records, &mut buf).expect("in-memory write");
    buf
}

pub fn read_jsonl<R: Read>(reader: R) -> Result<Vec<AttributionRecord>, AttributionError> {
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| AttributionError::Io {
            path: format!("<line {line_no}>"),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireRecord =
            serde_json::from_str(&line).map_err(|e| AttributionError::InvalidRecord {
                line: line_no,
                detail: e.to_string(),
            })?;
        records.push(from_wire(wire, line_no)?);
    }
    Ok(records)
}

pub fn read_jsonl_file(path: &Path) -> Result<Vec<AttributionRecord>, AttributionError> {
    let file = fs::File::open(path).map_err(|source| AttributionError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_jsonl(file)
}
