//! Corpus loading and word segmentation.
//!
//! A corpus is a JSONL file of rule/script pairs. Rules are segmented
//! into whitespace-delimited words (the attribution units); stop words
//! are marked against a configurable list but never removed from the
//! token sequence.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Default stop-word list shipped with the crate: common English
/// function words, one per line. Negations are deliberately absent so
/// constraint words like "not" stay in the ablation set.
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read corpus file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed JSON on line {line}: {detail}")]
    MalformedLine { line: usize, detail: String },
    #[error("invalid sample on line {line}: {detail}")]
    InvalidSample { line: usize, detail: String },
    #[error("duplicate sample id \"{id}\" on line {line}")]
    DuplicateId { id: String, line: usize },
}

/// One corpus sample: a textual rule (the input `X`) and its reference
/// script (the target `T`), optionally with per-model generated scripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulePair {
    pub id: String,
    #[serde(rename = "rule")]
    pub rule_text: String,
    pub reference_script: String,
    #[serde(
        rename = "generated",
        default,
        skip_serializing_if = "BTreeMap::is_empty"
    )]
    pub generated_scripts: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

/// One word of a rule, exactly as it appears in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordToken {
    pub text: String,
    /// 0-based ordinal within the rule.
    pub index: usize,
    /// Byte offsets `(start, end)` into the rule text; slicing the rule
    /// at the span yields `text`.
    pub span: (usize, usize),
    pub is_stopword: bool,
}

/// Load a JSONL corpus: one `RulePair` object per line, file order
/// preserved. Blank lines are skipped; malformed lines and duplicate
/// ids are rejected with the offending line number.
pub fn load_corpus(path: &Path) -> Result<Vec<RulePair>, CorpusError> {
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_corpus_reader(BufReader::new(file))
}

/// Same as [`load_corpus`] but over any reader (used for in-memory tests).
pub fn load_corpus_reader<R: Read>(reader: BufReader<R>) -> Result<Vec<RulePair>, CorpusError> {
    let mut pairs = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: format!("<line {line_no}>"),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: RulePair =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedLine {
                line: line_no,
                detail: e.to_string(),
            })?;
        validate_pair(&pair, line_no)?;
        if !seen.insert(pair.id.clone()) {
            return Err(CorpusError::DuplicateId {
                id: pair.id,
                line: line_no,
            });
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

fn validate_pair(pair: &RulePair, line: usize) -> Result<(), CorpusError> {
    for (field, value) in [
        ("id", &pair.id),
        ("rule", &pair.rule_text),
        ("reference_script", &pair.reference_script),
    ] {
        if value.is_empty() {
            return Err(CorpusError::InvalidSample {
                line,
                detail: format!("field `{field}` must be non-empty"),
            });
        }
    }
    Ok(())
}

/// Segment a rule into words: maximal runs of non-whitespace characters,
/// in order. No punctuation splitting, so identifiers like `4.3.11d` and
/// values like `2.2` stay intact as single attribution units.
pub fn segment_words(rule_text: &str) -> Vec<WordToken> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (pos, ch) in rule_text.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                push_token(&mut tokens, rule_text, s, pos);
            }
        } else if start.is_none() {
            start = Some(pos);
        }
    }
    if let Some(s) = start {
        push_token(&mut tokens, rule_text, s, rule_text.len());
    }
    tokens
}

fn push_token(tokens: &mut Vec<WordToken>, text: &str, start: usize, end: usize) {
    tokens.push(WordToken {
        text: text[start..end].to_string(),
        index: tokens.len(),
        span: (start, end),
        is_stopword: false,
    });
}

/// A lowercase stop-word set plus the digest of the bytes it was loaded
/// from, so runs can record exactly which list they used.
#[derive(Debug, Clone)]
pub struct Stoplist {
    words: BTreeSet<String>,
    digest: String,
}

impl Stoplist {
    /// Parse a stop-word file: one word per line, `#`-prefixed lines and
    /// blank lines ignored. Entries are lowercased on load.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Stoplist {
            words,
            digest: crate::store::sha256_hex(text.as_bytes()),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::parse(&text))
    }

    /// The list shipped with the crate (see [`DEFAULT_STOPWORDS`]).
    pub fn default_embedded() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    pub fn empty() -> Self {
        Self::parse("")
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// SHA-256 hex of the source bytes, for manifests and config digests.
    pub fn digest(&self) -> &str {
        &self.digest
    }
}

/// Mark stop words: a token matches when lowercasing its text, after
/// trimming leading/trailing characters that are neither letters nor
/// digits, yields a stoplist member. Texts, indices, and spans are left
/// untouched; ablation always removes the full original token.
pub fn mark_stopwords(mut tokens: Vec<WordToken>, stoplist: &Stoplist) -> Vec<WordToken> {
    for token in &mut tokens {
        let trimmed = token.text.trim_matches(|c: char| !c.is_alphanumeric());
        token.is_stopword = !trimmed.is_empty() && stoplist.contains(&trimmed.to_lowercase());
    }
    tokens
}

/// Segment and mark in one step; this is the canonical word sequence
/// the attribution engine and reports operate on.
pub fn tokenize_rule(rule_text: &str, stoplist: &Stoplist) -> Vec<WordToken> {
    mark_stopwords(segment_words(rule_text), stoplist)
}
