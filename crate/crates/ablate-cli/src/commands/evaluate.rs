//! `ablate evaluate` — embedding-based semantic similarity of generated
//! scripts against references.

use ablate_core::scorer::{EmbedBackend, MockEmbedder};
use ablate_core::semsim::evaluate_corpus;

use super::{connect_remote, load_corpus_with_digest, RemoteSettings};
use crate::config::{resolve, resolve_required, FileConfig};
use crate::error::CliError;
use crate::EvaluateArgs;

pub fn run(args: EvaluateArgs, file_config: &FileConfig) -> Result<(), CliError> {
    let corpus_path = resolve_required(args.corpus, file_config.path("corpus"), "--corpus")?;
    let out = resolve_required(args.out, file_config.path("out"), "--out")?;
    let model_ids = if args.model_ids.is_empty() {
        file_config.string_list("model_ids").unwrap_or_default()
    } else {
        args.model_ids
    };
    if model_ids.is_empty() {
        return Err(CliError::usage("provide model ids via --model-ids"));
    }
    let beta = resolve(args.beta, file_config.float("beta"), 3.0);
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
    let embed_dim = resolve(
        args.embed_dim,
        file_config.unsigned("embed_dim").map(|v| v as usize),
        MockEmbedder::DEFAULT_DIM,
    );

    let (corpus, _digest) = load_corpus_with_digest(&corpus_path)?;

    let embed_endpoint = args.embed_endpoint.or(file_config.string("embed_endpoint"));
    let backend: Box<dyn EmbedBackend> = match embed_endpoint {
        Some(url) => Box::new(connect_remote(
            &url,
            RemoteSettings {
                timeout_ms: resolve(args.timeout_ms, file_config.unsigned("timeout_ms"), 30_000),
                ..RemoteSettings::default()
            },
        )?),
        None => Box::new(MockEmbedder::new(embed_dim)?),
    };

    let (evaluation, failures) = evaluate_corpus(
        &corpus,
        &model_ids,
        backend.as_ref(),
        beta,
        parallelism,
        max_failures,
    )?;
    for failure in &failures {
        log::warn!("sample skipped: {failure}");
    }

    super::write_pretty_json(&out, &evaluation)?;
    println!(
        "evaluated {} model(s) over {} sample(s) -> {}",
        evaluation.models.len(),
        corpus.len(),
        out.display()
    );
    Ok(())
}
