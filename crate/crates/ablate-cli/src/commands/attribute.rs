//! `ablate attribute` — score a corpus and write per-word attribution
//! JSONL plus the run manifest.

use ablate_core::attribution::{self, AttributionConfig, AttributionEngine};
use ablate_core::scorer::{ReferenceScorer, ScoreBackend};
use ablate_core::store::{self, ModelSpec, RunDir, RunManifest, ScoreCache};

use super::{connect_remote, created_at, load_corpus_with_digest, load_stoplist, RemoteSettings};
use crate::config::{resolve, resolve_required, FileConfig};
use crate::error::CliError;
use crate::AttributeArgs;

pub fn run(args: AttributeArgs, file_config: &FileConfig) -> Result<(), CliError> {
    let corpus_path = resolve_required(args.corpus, file_config.path("corpus"), "--corpus")?;
    let model_id = resolve_required(args.model_id, file_config.string("model_id"), "--model-id")?;
    let out = resolve_required(args.out, file_config.path("out"), "--out")?;
    let alpha = resolve(args.alpha, file_config.float("alpha"), 1.0);
    let parallelism = resolve(
        args.parallel,
        file_config.unsigned("parallel").map(|v| v as usize),
        1,
    )
    .max(1);
    let max_failures = resolve(
        args.max_failures,
        file_config.unsigned("max_failures").map(|v| v as usize),
        0,
    );
    let stopwords_path = args.stopwords.or(file_config.path("stopwords"));
    let cache_dir = args.cache.or(file_config.path("cache"));

    let (corpus, corpus_digest) = load_corpus_with_digest(&corpus_path)?;
    let stoplist = load_stoplist(stopwords_path.as_deref())?;

    let endpoint = args.endpoint.or(file_config.string("endpoint"));
    let backend_kind = args.backend.or(file_config.string("backend"));
    let backend: Box<dyn ScoreBackend> = match (&endpoint, backend_kind.as_deref()) {
        (Some(_), Some(_)) => {
            return Err(CliError::usage(
                "--endpoint and --backend are mutually exclusive",
            ))
        }
        (Some(url), None) => Box::new(connect_remote(
            url,
            RemoteSettings {
                timeout_ms: resolve(args.timeout_ms, file_config.unsigned("timeout_ms"), 30_000),
                retry_attempts: resolve(
                    args.retry_attempts,
                    file_config.unsigned("retry_attempts").map(|v| v as u32),
                    3,
                ),
                retry_backoff_ms: resolve(
                    args.retry_backoff_ms,
                    file_config.unsigned("retry_backoff_ms"),
                    250,
                ),
                max_in_flight: args
                    .max_in_flight
                    .or(file_config.unsigned("max_in_flight").map(|v| v as usize)),
            },
        )?),
        (None, Some("reference")) => Box::new(ReferenceScorer::new(alpha)?),
        (None, Some(other)) => {
            return Err(CliError::usage(format!(
                "unknown backend \"{other}\"; use `--backend reference` or `--endpoint URL`"
            )))
        }
        (None, None) => {
            return Err(CliError::usage(
                "specify a backend: `--backend reference` or `--endpoint URL`",
            ))
        }
    };

    let mut config = AttributionConfig::new(model_id.clone());
    config.alpha = alpha;
    config.parallelism = parallelism;
    config.max_failures = max_failures;

    let cache = cache_dir.map(ScoreCache::new);
    let mut engine = AttributionEngine::new(backend.as_ref(), &stoplist, config);
    if let Some(cache) = &cache {
        engine = engine.with_cache(cache);
    }

    let outcome = engine.attribute_corpus(&corpus)?;
    for failure in &outcome.failures {
        log::warn!("sample skipped: {failure}");
    }

    let run_dir = RunDir::new(&out);
    let jsonl_path = run_dir.attribution_path(&model_id);
    store::write_atomic(&jsonl_path, &attribution::jsonl_bytes(&outcome.records))?;

    let manifest = RunManifest {
        run_id: run_dir.run_id(),
        created_at: created_at()?,
        corpus_digest,
        models: vec![ModelSpec {
            model_id: model_id.clone(),
            endpoint: backend.descriptor(),
            parameters: serde_json::Map::from_iter([(
                "alpha".to_string(),
                serde_json::json!(alpha),
            )]),
        }],
        alpha,
        stopword_digest: stoplist.digest().to_string(),
        parallelism,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        extra: serde_json::Map::new(),
    };
    store::write_manifest(&manifest, run_dir.root())?;

    println!(
        "wrote {} attribution record(s) to {}",
        outcome.records.len(),
        jsonl_path.display()
    );
    Ok(())
}
