//! Word-level perturbation attribution for conditional text-generation
//! backends, plus the statistics and rendering needed to compare
//! attribution patterns across model variants.
//!
//! The pipeline: [`corpus`] loads rule/script pairs and segments rules
//! into words; [`scorer`] provides the conditional log-probability
//! oracle `f(X) = log P(T|X)` (remote wire client, deterministic
//! reference scorer, embedding providers); [`attribution`] ablates one
//! word at a time and records the log-probability deltas; [`analysis`]
//! compares attribution vectors across models (cosine similarity,
//! paired t / Wilcoxon signed-rank tests, box summaries); [`semsim`]
//! scores generated scripts against references with greedy embedding
//! matching; [`report`] renders heatmaps and box plots; [`store`]
//! persists run manifests and the content-addressed score cache.
//!
//! All engine outputs are deterministic: reruns, cache-warm runs, and
//! any parallelism setting produce byte-identical artifacts.

pub mod analysis;
pub mod attribution;
pub mod corpus;
pub mod exec;
pub mod report;
pub mod scorer;
pub mod semsim;
pub mod server;
pub mod store;
