//! Cross-model comparison of attribution records: per-sample cosine
//! similarity, aggregate means, paired t-tests, Wilcoxon signed-rank
//! tests, and box-plot summaries.
//!
//! The comparison unit is the attribution vector — the ordered scores
//! of a rule's non-excluded words. Records for the same sample from two
//! models align word-for-word (same rule, same stop mask) and their
//! cosine measures how similarly the two models distribute importance.
//! Hypothesis tests then pair two similarity series that share a common
//! model, sample by sample.

pub mod special;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::attribution::AttributionRecord;
use special::{normal_cdf, student_t_two_sided_p};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("input lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("input is empty")]
    EmptyInput,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("cosine undefined for a zero vector")]
    ZeroVector,
    #[error("need at least {required} pairs, got {n}")]
    TooFewPairs { n: usize, required: usize },
    #[error("degenerate data: {detail}")]
    DegenerateData { detail: String },
    #[error("records are for different samples: \"{left}\" vs \"{right}\"")]
    SampleMismatch { left: String, right: String },
    #[error("records disagree at word index {index}: {detail}")]
    AlignmentMismatch { index: usize, detail: String },
    #[error("models do not cover the same samples: {detail}")]
    CoverageMismatch { detail: String },
    #[error("duplicate record for sample \"{sample_id}\" of model \"{model_id}\"")]
    DuplicateSample { sample_id: String, model_id: String },
    #[error("write failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-sample cosine similarity between two models' attribution vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    pub sample_id: String,
    pub model_a: String,
    pub model_b: String,
    pub cosine: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestMethod {
    #[serde(rename = "paired-t")]
    PairedT,
    #[serde(rename = "wilcoxon-signed-rank")]
    WilcoxonSignedRank,
}

/// Method-specific detail, serialized as a small map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TestDetail {
    StudentT { df: usize },
    Wilcoxon { n_nonzero: usize, exact: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisTestResult {
    pub method: TestMethod,
    pub statistic: f64,
    pub p_value: f64,
    /// Effective pairs: all pairs for t, nonzero-difference pairs for
    /// Wilcoxon.
    pub n: usize,
    pub detail: TestDetail,
}

/// Five-number box summary with Tukey fences (1.5·IQR).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
    pub n: usize,
}

// ---------------------------------------------------------------------------
// Vector alignment and cosine
// ---------------------------------------------------------------------------

/// Extract the two score vectors over non-excluded entries,
/// index-aligned. The records must describe the same sample with the
/// same word sequence and the same exclusion mask.
pub fn align_vectors(
    a: &AttributionRecord,
    b: &AttributionRecord,
) -> Result<(Vec<f64>, Vec<f64>), AnalysisError> {
    if a.sample_id != b.sample_id {
        return Err(AnalysisError::SampleMismatch {
            left: a.sample_id.clone(),
            right: b.sample_id.clone(),
        });
    }
    let common = a.entries.len().min(b.entries.len());
    for i in 0..common {
        let (ea, eb) = (&a.entries[i], &b.entries[i]);
        if ea.word != eb.word {
            return Err(AnalysisError::AlignmentMismatch {
                index: i,
                detail: format!("word \"{}\" vs \"{}\"", ea.word, eb.word),
            });
        }
        if ea.excluded() != eb.excluded() {
            return Err(AnalysisError::AlignmentMismatch {
                index: i,
                detail: "exclusion masks differ".to_string(),
            });
        }
    }
    if a.entries.len() != b.entries.len() {
        return Err(AnalysisError::AlignmentMismatch {
            index: common,
            detail: format!(
                "word counts differ: {} vs {}",
                a.entries.len(),
                b.entries.len()
            ),
        });
    }
    Ok((a.score_vector(), b.score_vector()))
}

/// Plain cosine: u·v / (‖u‖‖v‖). Errors on empty input, length
/// mismatch, non-finite components, or an all-zero vector.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, AnalysisError> {
    if u.len() != v.len() {
        return Err(AnalysisError::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    if u.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v.iter()) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(AnalysisError::ZeroVector);
    }
    Ok(dot / (nu.sqrt() * nv.sqrt()))
}

// ---------------------------------------------------------------------------
// Hypothesis tests
// ---------------------------------------------------------------------------

/// Paired t-test on `xs[i] − ys[i]` with sample standard deviation
/// (n−1 denominator). Two-sided p from the Student-t CDF via the
/// regularized incomplete beta: `p = I_{df/(df+t²)}(df/2, 1/2)`.
pub fn paired_t_test(xs: &[f64], ys: &[f64]) -> Result<HypothesisTestResult, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    let n = xs.len();
    if n < 2 {
        return Err(AnalysisError::TooFewPairs { n, required: 2 });
    }
    let diffs: Vec<f64> = xs.iter().zip(ys.iter()).map(|(x, y)| x - y).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    if diffs.iter().all(|d| *d == diffs[0]) {
        return Err(AnalysisError::DegenerateData {
            detail: "all differences identical (zero variance)".to_string(),
        });
    }
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        return Err(AnalysisError::DegenerateData {
            detail: "zero standard deviation of differences".to_string(),
        });
    }
    let t = mean / (sd / nf.sqrt());
    let df = n - 1;
    Ok(HypothesisTestResult {
        method: TestMethod::PairedT,
        statistic: t,
        p_value: student_t_two_sided_p(t, df as f64),
        n,
        detail: TestDetail::StudentT { df },
    })
}

/// Crossover between the exact and normal-approximation Wilcoxon paths.
pub const WILCOXON_EXACT_MAX_N: usize = 20;

/// Wilcoxon signed-rank test. Zero differences are dropped; absolute
/// differences are ranked with average ranks for ties; the statistic is
/// `W = min(W+, W−)`. For up to [`WILCOXON_EXACT_MAX_N`] nonzero
/// differences the two-sided p is exact over all 2^n sign assignments
/// (computed by rank-sum counting); beyond that, a normal approximation
/// with mean n(n+1)/4, variance n(n+1)(2n+1)/24, and continuity
/// correction 0.5.
pub fn wilcoxon_signed_rank(xs: &[f64], ys: &[f64]) -> Result<HypothesisTestResult, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    let diffs: Vec<f64> = xs
        .iter()
        .zip(ys.iter())
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let n = diffs.len();
    if n == 0 {
        return Err(AnalysisError::DegenerateData {
            detail: "all differences are zero".to_string(),
        });
    }
    let ranks = average_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w_plus: f64 = diffs
        .iter()
        .zip(ranks.iter())
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let total = n as f64 * (n as f64 + 1.0) / 2.0;
    let w_minus = total - w_plus;
    let w = w_plus.min(w_minus);

    let (p, exact) = if n <= WILCOXON_EXACT_MAX_N {
        (wilcoxon_exact_p(&ranks, w), true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
        let z = (w - mean + 0.5) / var.sqrt();
        ((2.0 * normal_cdf(z)).min(1.0), false)
    };
    Ok(HypothesisTestResult {
        method: TestMethod::WilcoxonSignedRank,
        statistic: w,
        p_value: p,
        n,
        detail: TestDetail::Wilcoxon {
            n_nonzero: n,
            exact,
        },
    })
}

/// Ranks 1..n over `values` with average ranks for ties.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share the average of ranks i+1..j
        let avg = (i + 1 + j) as f64 / 2.0;
        for k in i..j {
            ranks[order[k]] = avg;
        }
        i = j;
    }
    ranks
}

/// Exact two-sided p: the fraction of all 2^n sign assignments whose
/// `min(W+, W−)` is at most the observed statistic. Doubling the ranks
/// makes every achievable sum an integer (average ranks are halves), so
/// the assignment counts come from an integer subset-sum table and the
/// result is exact.
fn wilcoxon_exact_p(ranks: &[f64], w_observed: f64) -> f64 {
    let n = ranks.len();
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let w2 = (w_observed * 2.0).round() as usize;
    let mut favorable: u64 = 0;
    for (s, &c) in counts.iter().enumerate() {
        if s.min(total - s) <= w2 {
            favorable += c;
        }
    }
    favorable as f64 / (1u64 << n) as f64
}

// ---------------------------------------------------------------------------
// Box summaries
// ---------------------------------------------------------------------------

/// Five-number summary: quartiles by linear interpolation on the sorted
/// order statistics (position p·(n−1)), whiskers at the most extreme
/// data points within 1.5·IQR of the quartiles, points beyond reported
/// as outliers.
pub fn box_stats(values: &[f64]) -> Result<BoxSummary, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let quantile = |p: f64| -> f64 {
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(sorted.len() - 1);
        let frac = pos - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    };
    let q1 = quantile(0.25);
    let median = quantile(0.5);
    let q3 = quantile(0.75);
    let iqr = q3 - q1;
    let lo_fence = q1 - 1.5 * iqr;
    let hi_fence = q3 + 1.5 * iqr;
    let whisker_low = *sorted
        .iter()
        .find(|v| **v >= lo_fence)
        .expect("quartiles lie within the fences");
    let whisker_high = *sorted
        .iter()
        .rev()
        .find(|v| **v <= hi_fence)
        .expect("quartiles lie within the fences");
    let outliers = sorted
        .iter()
        .copied()
        .filter(|v| *v < lo_fence || *v > hi_fence)
        .collect();
    Ok(BoxSummary {
        median,
        q1,
        q3,
        whisker_low,
        whisker_high,
        outliers,
        n: sorted.len(),
    })
}

// ---------------------------------------------------------------------------
// Pairwise similarities and the full comparison report
// ---------------------------------------------------------------------------

/// Index records by model id, then by sample id. Duplicate samples
/// within a model are rejected.
pub fn index_by_model(
    records: impl IntoIterator<Item = AttributionRecord>,
) -> Result<BTreeMap<String, BTreeMap<String, AttributionRecord>>, AnalysisError> {
    let mut by_model: BTreeMap<String, BTreeMap<String, AttributionRecord>> = BTreeMap::new();
    for record in records {
        let model_id = record.model_id.clone();
        let sample_id = record.sample_id.clone();
        let model = by_model.entry(model_id.clone()).or_default();
        if model.insert(sample_id.clone(), record).is_some() {
            return Err(AnalysisError::DuplicateSample {
                sample_id,
                model_id,
            });
        }
    }
    Ok(by_model)
}

/// One `SimilarityRecord` per unordered model pair per shared sample,
/// sorted by (model_a, model_b, sample_id). All models must cover the
/// same sample set.
pub fn pairwise_similarities(
    by_model: &BTreeMap<String, BTreeMap<String, AttributionRecord>>,
) -> Result<Vec<SimilarityRecord>, AnalysisError> {
    verify_coverage(by_model)?;
    let models: Vec<&String> = by_model.keys().collect();
    let mut out = Vec::new();
    for i in 0..models.len() {
        for j in (i + 1)..models.len() {
            let (ma, mb) = (models[i], models[j]);
            let records_a = &by_model[ma];
            let records_b = &by_model[mb];
            for (sample_id, rec_a) in records_a {
                let rec_b = &records_b[sample_id];
                let (u, v) = align_vectors(rec_a, rec_b)?;
                out.push(SimilarityRecord {
                    sample_id: sample_id.clone(),
                    model_a: ma.clone(),
                    model_b: mb.clone(),
                    cosine: cosine_similarity(&u, &v)?,
                });
            }
        }
    }
    Ok(out)
}

fn verify_coverage(
    by_model: &BTreeMap<String, BTreeMap<String, AttributionRecord>>,
) -> Result<(), AnalysisError> {
    let mut iter = by_model.iter();
    let Some((first_model, first)) = iter.next() else {
        return Err(AnalysisError::EmptyInput);
    };
    let reference: Vec<&String> = first.keys().collect();
    for (model, records) in iter {
        let ids: Vec<&String> = records.keys().collect();
        if ids != reference {
            let missing_here: Vec<&str> = reference
                .iter()
                .filter(|id| !records.contains_key(**id))
                .map(|id| id.as_str())
                .collect();
            let extra_here: Vec<&str> = ids
                .iter()
                .filter(|id| !first.contains_key(**id))
                .map(|id| id.as_str())
                .collect();
            return Err(AnalysisError::CoverageMismatch {
                detail: format!(
                    "model \"{model}\" vs \"{first_model}\": missing [{}], extra [{}]",
                    missing_here.join(", "),
                    extra_here.join(", ")
                ),
            });
        }
    }
    Ok(())
}

/// A model pair's similarity series with its mean and box summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub model_a: String,
    pub model_b: String,
    pub mean_cosine: f64,
    pub samples: Vec<SampleCosine>,
    #[serde(rename = "box")]
    pub box_summary: BoxSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCosine {
    pub sample_id: String,
    pub cosine: f64,
}

/// One hypothesis test between two similarity series sharing a common
/// model. Degenerate data is reported in place instead of failing the
/// run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReportEntry {
    pub comparison: String,
    pub method: TestMethod,
    #[serde(flatten)]
    pub outcome: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TestOutcome {
    Completed {
        statistic: f64,
        p_value: f64,
        n: usize,
        detail: TestDetail,
    },
    Degenerate {
        error: String,
    },
}

/// The full comparison document: every model pair's similarity series
/// and, for every two pairs sharing a common model, both hypothesis
/// tests on the per-sample pairing of their cosines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub pairs: Vec<PairReport>,
    pub tests: Vec<TestReportEntry>,
}

pub fn build_report(
    by_model: &BTreeMap<String, BTreeMap<String, AttributionRecord>>,
) -> Result<AnalysisReport, AnalysisError> {
    let sims = pairwise_similarities(by_model)?;

    let mut grouped: BTreeMap<(String, String), Vec<SampleCosine>> = BTreeMap::new();
    for sim in sims {
        grouped
            .entry((sim.model_a, sim.model_b))
            .or_default()
            .push(SampleCosine {
                sample_id: sim.sample_id,
                cosine: sim.cosine,
            });
    }

    let mut pairs = Vec::new();
    for ((model_a, model_b), samples) in &grouped {
        let cosines: Vec<f64> = samples.iter().map(|s| s.cosine).collect();
        pairs.push(PairReport {
            model_a: model_a.clone(),
            model_b: model_b.clone(),
            mean_cosine: cosines.iter().sum::<f64>() / cosines.len() as f64,
            samples: samples.clone(),
            box_summary: box_stats(&cosines)?,
        });
    }

    let mut tests = Vec::new();
    let pair_keys: Vec<&(String, String)> = grouped.keys().collect();
    for pivot in by_model.keys() {
        let with_pivot: Vec<&(String, String)> = pair_keys
            .iter()
            .copied()
            .filter(|(a, b)| a == pivot || b == pivot)
            .collect();
        for i in 0..with_pivot.len() {
            for j in (i + 1)..with_pivot.len() {
                let (k1, k2) = (with_pivot[i], with_pivot[j]);
                let label = |k: &(String, String)| format!("{}-vs-{}", k.0, k.1);
                let comparison = format!("{} vs {}", label(k1), label(k2));
                let xs: Vec<f64> = grouped[k1].iter().map(|s| s.cosine).collect();
                let ys: Vec<f64> = grouped[k2].iter().map(|s| s.cosine).collect();
                for (method, run) in [
                    (TestMethod::PairedT, paired_t_test(&xs, &ys)),
                    (TestMethod::WilcoxonSignedRank, wilcoxon_signed_rank(&xs, &ys)),
                ] {
                    let outcome = match run {
                        Ok(result) => TestOutcome::Completed {
                            statistic: result.statistic,
                            p_value: result.p_value,
                            n: result.n,
                            detail: result.detail,
                        },
                        Err(
                            e @ (AnalysisError::DegenerateData { .. }
                            | AnalysisError::TooFewPairs { .. }),
                        ) => TestOutcome::Degenerate {
                            error: e.to_string(),
                        },
                        Err(other) => return Err(other),
                    };
                    tests.push(TestReportEntry {
                        comparison: comparison.clone(),
                        method,
                        outcome,
                    });
                }
            }
        }
    }

    Ok(AnalysisReport { pairs, tests })
}

/// CSV export of per-sample cosines: `sample_id,model_a,model_b,cosine`.
pub fn write_similarity_csv<W: Write>(
    records: &[SimilarityRecord],
    out: W,
) -> Result<(), AnalysisError> {
    let mut writer = csv::Writer::from_writer(out);
    for record in records {
        writer
            .serialize(record)
            .map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}
