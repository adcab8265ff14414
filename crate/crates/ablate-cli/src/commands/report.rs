//! `ablate report heatmap` / `ablate report boxplot` — static figure
//! rendering from pipeline outputs.

use std::collections::BTreeMap;
use std::path::Path;

use ablate_core::analysis::{AnalysisReport, BoxSummary};
use ablate_core::attribution::read_jsonl_file;
use ablate_core::report::{render_boxplot, render_heatmap};
use ablate_core::semsim::CorpusEvaluation;
use ablate_core::store;

use super::write_pretty_json;
use crate::config::{resolve_required, FileConfig};
use crate::error::CliError;
use crate::{BoxplotArgs, HeatmapArgs};

pub fn heatmap(args: HeatmapArgs, file_config: &FileConfig) -> Result<(), CliError> {
    let inputs = if args.inputs.is_empty() {
        file_config.path_list("inputs").unwrap_or_default()
    } else {
        args.inputs
    };
    if inputs.is_empty() {
        return Err(CliError::usage(
            "provide attribution files via --inputs",
        ));
    }
    let mode = match args.mode {
        Some(mode) => mode,
        None => file_config
            .string("mode")
            .ok_or_else(|| CliError::usage("missing required setting: --mode"))?
            .parse()
            .map_err(CliError::usage)?,
    };
    let out = resolve_required(args.out, file_config.path("out"), "--out")?;
    let json_out = args.json_out.or(file_config.path("json_out"));

    let mut records = Vec::new();
    for path in &inputs {
        records.extend(read_jsonl_file(path)?);
    }
    let heatmap = render_heatmap(&records, mode)?;
    store::write_atomic(&out, heatmap.html.as_bytes())?;
    if let Some(json_path) = json_out {
        write_pretty_json(&json_path, &heatmap.json)?;
    }
    println!(
        "rendered heatmap ({mode}) over {} record(s) -> {}",
        records.len(),
        out.display()
    );
    Ok(())
}

pub fn boxplot(args: BoxplotArgs, file_config: &FileConfig) -> Result<(), CliError> {
    let input = resolve_required(args.input, file_config.path("input"), "--input")?;
    let out = resolve_required(args.out, file_config.path("out"), "--out")?;
    let metric = args.metric.or(file_config.string("metric"));
    let title_override = args.title.or(file_config.string("title"));
    let json_out = args.json_out.or(file_config.path("json_out"));

    let (groups, title) = load_groups(&input, metric.as_deref())?;
    let title = title_override.unwrap_or(title);

    let plot = render_boxplot(&groups, &title)?;
    store::write_atomic(&out, plot.svg.as_bytes())?;
    if let Some(json_path) = json_out {
        write_pretty_json(&json_path, &plot.json)?;
    }
    println!("rendered box plot of {} group(s) -> {}", groups.len(), out.display());
    Ok(())
}

/// Pull plottable groups out of a `compare` or `evaluate` output file.
fn load_groups(
    path: &Path,
    metric: Option<&str>,
) -> Result<(BTreeMap<String, BoxSummary>, String), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("cannot parse {}: {e}", path.display())))?;

    if value.get("pairs").is_some() {
        match metric.unwrap_or("cosine") {
            "cosine" => {}
            other => {
                return Err(CliError::usage(format!(
                    "metric \"{other}\" is not available in a compare output (use \"cosine\")"
                )))
            }
        }
        let report: AnalysisReport = serde_json::from_value(value)
            .map_err(|e| CliError::data(format!("{} is not a compare output: {e}", path.display())))?;
        let groups = report
            .pairs
            .into_iter()
            .map(|p| (format!("{}-vs-{}", p.model_a, p.model_b), p.box_summary))
            .collect();
        return Ok((groups, "Attribution cosine similarity".to_string()));
    }

    if value.get("models").is_some() && value.get("beta").is_some() {
        let evaluation: CorpusEvaluation = serde_json::from_value(value).map_err(|e| {
            CliError::data(format!("{} is not an evaluate output: {e}", path.display()))
        })?;
        let metric = metric.unwrap_or("f1");
        let (groups, title) = match metric {
            "f1" => (
                evaluation
                    .models
                    .iter()
                    .map(|m| (m.model_id.clone(), m.box_f1.clone()))
                    .collect(),
                "Semantic similarity (F1)".to_string(),
            ),
            "fbeta" => (
                evaluation
                    .models
                    .iter()
                    .map(|m| (m.model_id.clone(), m.box_fbeta.clone()))
                    .collect(),
                format!("Semantic similarity (F-beta, beta={})", evaluation.beta),
            ),
            other => {
                return Err(CliError::usage(format!(
                    "metric \"{other}\" is not available in an evaluate output (use \"f1\" or \"fbeta\")"
                )))
            }
        };
        return Ok((groups, title));
    }

    Err(CliError::data(format!(
        "{} is neither a compare nor an evaluate output",
        path.display()
    )))
}
