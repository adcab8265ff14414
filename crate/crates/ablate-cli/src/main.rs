//! `ablate` — word-ablation attribution pipeline for conditional text
//! generators.
//!
//! Subcommands: `attribute` (score a corpus against a backend and write
//! attribution JSONL + a run manifest), `compare` (cross-model cosine
//! similarities, box summaries, hypothesis tests), `evaluate`
//! (embedding-based generated-vs-reference script similarity),
//! `report heatmap` / `report boxplot` (static HTML/SVG figures), and
//! `mock-server` (the reference backend behind the wire protocol).
//!
//! Every flag can also come from an `ABLATE_`-prefixed environment
//! variable or a `--config` JSON file; flags win over the environment,
//! which wins over the file.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::FileConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "ablate", version, about = "Word-ablation attribution toolkit")]
struct Cli {
    /// Optional JSON config file mirroring all flags.
    #[arg(long, global = true, env = "ABLATE_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute per-word attribution scores for a corpus.
    Attribute(AttributeArgs),
    /// Compare attribution outputs across models.
    Compare(CompareArgs),
    /// Score generated scripts against references with embeddings.
    Evaluate(EvaluateArgs),
    /// Render figures from attribution or analysis outputs.
    #[command(subcommand)]
    Report(ReportCommand),
    /// Serve the reference scorer and mock embedder over HTTP.
    MockServer(MockServerArgs),
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Attribution heatmap as a self-contained HTML document.
    Heatmap(HeatmapArgs),
    /// Distribution box plot as an SVG document.
    Boxplot(BoxplotArgs),
}

#[derive(Args)]
struct AttributeArgs {
    /// Corpus JSONL file.
    #[arg(long, env = "ABLATE_CORPUS")]
    corpus: Option<PathBuf>,
    /// Use the built-in backend: `reference`.
    #[arg(long, env = "ABLATE_BACKEND")]
    backend: Option<String>,
    /// Score against a remote wire-protocol endpoint instead.
    #[arg(long, env = "ABLATE_ENDPOINT")]
    endpoint: Option<String>,
    /// Model identifier recorded in records, cache keys, and manifests.
    #[arg(long, env = "ABLATE_MODEL_ID")]
    model_id: Option<String>,
    /// Run directory to write into.
    #[arg(long, env = "ABLATE_OUT")]
    out: Option<PathBuf>,
    /// Smoothing constant of the reference scorer.
    #[arg(long, env = "ABLATE_ALPHA")]
    alpha: Option<f64>,
    /// Stop-word file (one lowercase word per line); defaults to the
    /// built-in list.
    #[arg(long, env = "ABLATE_STOPWORDS")]
    stopwords: Option<PathBuf>,
    /// Worker count for concurrent scoring.
    #[arg(long, env = "ABLATE_PARALLEL")]
    parallel: Option<usize>,
    /// Content-addressed score cache directory.
    #[arg(long, env = "ABLATE_CACHE")]
    cache: Option<PathBuf>,
    /// Tolerated per-sample failures before the run fails.
    #[arg(long, env = "ABLATE_MAX_FAILURES")]
    max_failures: Option<usize>,
    /// Cap on simultaneous in-flight requests to the endpoint.
    #[arg(long, env = "ABLATE_MAX_IN_FLIGHT")]
    max_in_flight: Option<usize>,
    /// Per-request timeout in milliseconds.
    #[arg(long, env = "ABLATE_TIMEOUT_MS")]
    timeout_ms: Option<u64>,
    /// Transport retry budget.
    #[arg(long, env = "ABLATE_RETRY_ATTEMPTS")]
    retry_attempts: Option<u32>,
    /// Base backoff in milliseconds, doubled per failed attempt.
    #[arg(long, env = "ABLATE_RETRY_BACKOFF_MS")]
    retry_backoff_ms: Option<u64>,
}

#[derive(Args)]
struct CompareArgs {
    /// Two or more attribution JSONL files over the same samples.
    #[arg(long, env = "ABLATE_INPUTS", num_args = 1.., value_delimiter = ',')]
    inputs: Vec<PathBuf>,
    /// Analysis JSON output path.
    #[arg(long, env = "ABLATE_OUT")]
    out: Option<PathBuf>,
    /// Optional CSV export of per-sample cosines.
    #[arg(long, env = "ABLATE_CSV")]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Corpus JSONL file carrying generated scripts.
    #[arg(long, env = "ABLATE_CORPUS")]
    corpus: Option<PathBuf>,
    /// Model ids to evaluate (comma-separated or repeated).
    #[arg(long, env = "ABLATE_MODEL_IDS", num_args = 1.., value_delimiter = ',')]
    model_ids: Vec<String>,
    /// Remote embedding endpoint; omit to use the built-in mock
    /// embedder.
    #[arg(long, env = "ABLATE_EMBED_ENDPOINT")]
    embed_endpoint: Option<String>,
    /// Mock embedder dimension.
    #[arg(long, env = "ABLATE_EMBED_DIM")]
    embed_dim: Option<usize>,
    /// Recall weight β of the F_β aggregate.
    #[arg(long, env = "ABLATE_BETA")]
    beta: Option<f64>,
    /// Evaluation JSON output path.
    #[arg(long, env = "ABLATE_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "ABLATE_PARALLEL")]
    parallel: Option<usize>,
    #[arg(long, env = "ABLATE_MAX_FAILURES")]
    max_failures: Option<usize>,
    #[arg(long, env = "ABLATE_TIMEOUT_MS")]
    timeout_ms: Option<u64>,
}

#[derive(Args)]
struct HeatmapArgs {
    /// Attribution JSONL files (one per model).
    #[arg(long, env = "ABLATE_INPUTS", num_args = 1.., value_delimiter = ',')]
    inputs: Vec<PathBuf>,
    /// Color normalization: `shared-max` or `per-model`.
    #[arg(long, env = "ABLATE_MODE")]
    mode: Option<ablate_core::report::NormalizationMode>,
    /// HTML output path.
    #[arg(long, env = "ABLATE_OUT")]
    out: Option<PathBuf>,
    /// Also dump the exact rendered numbers as JSON.
    #[arg(long, env = "ABLATE_JSON_OUT")]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct BoxplotArgs {
    /// A `compare` or `evaluate` output JSON file.
    #[arg(long, env = "ABLATE_INPUT")]
    input: Option<PathBuf>,
    /// Metric to plot: `cosine` (compare input), `f1` or `fbeta`
    /// (evaluate input). Defaults by input kind.
    #[arg(long, env = "ABLATE_METRIC")]
    metric: Option<String>,
    /// Plot title.
    #[arg(long, env = "ABLATE_TITLE")]
    title: Option<String>,
    /// SVG output path.
    #[arg(long, env = "ABLATE_OUT")]
    out: Option<PathBuf>,
    /// Also dump the plotted summaries as JSON.
    #[arg(long, env = "ABLATE_JSON_OUT")]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct MockServerArgs {
    /// Port to bind (0 picks an ephemeral port).
    #[arg(long, env = "ABLATE_PORT")]
    port: Option<u16>,
    /// Interface to bind.
    #[arg(long, env = "ABLATE_HOST")]
    host: Option<String>,
    /// Smoothing constant of the served reference scorer.
    #[arg(long, env = "ABLATE_ALPHA")]
    alpha: Option<f64>,
    /// Embedding dimension of the served mock embedder.
    #[arg(long, env = "ABLATE_EMBED_DIM")]
    embed_dim: Option<usize>,
    /// Model name reported by the health endpoint.
    #[arg(long, env = "ABLATE_MODEL_NAME")]
    model_name: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(error::EXIT_USAGE);
        }
    };

    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file_config = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Attribute(args) => commands::attribute::run(args, &file_config),
        Command::Compare(args) => commands::compare::run(args, &file_config),
        Command::Evaluate(args) => commands::evaluate::run(args, &file_config),
        Command::Report(ReportCommand::Heatmap(args)) => {
            commands::report::heatmap(args, &file_config)
        }
        Command::Report(ReportCommand::Boxplot(args)) => {
            commands::report::boxplot(args, &file_config)
        }
        Command::MockServer(args) => commands::mock_server::run(args, &file_config),
    }
}
