//! `ablate compare` — cross-model similarity analysis over attribution
//! JSONL files.

use ablate_core::analysis::{build_report, index_by_model, pairwise_similarities, write_similarity_csv};
use ablate_core::attribution::read_jsonl_file;
use ablate_core::store;

use super::write_pretty_json;
use crate::config::{resolve_required, FileConfig};
use crate::error::CliError;
use crate::CompareArgs;

pub fn run(args: CompareArgs, file_config: &FileConfig) -> Result<(), CliError> {
    let inputs = if args.inputs.is_empty() {
        file_config.path_list("inputs").unwrap_or_default()
    } else {
        args.inputs
    };
    if inputs.is_empty() {
        return Err(CliError::usage(
            "provide at least two attribution files via --inputs",
        ));
    }
    let out = resolve_required(args.out, file_config.path("out"), "--out")?;
    let csv = args.csv.or(file_config.path("csv"));

    let mut records = Vec::new();
    for path in &inputs {
        records.extend(read_jsonl_file(path)?);
    }
    let by_model = index_by_model(records)?;
    if by_model.len() < 2 {
        return Err(CliError::data(format!(
            "need attribution records for at least two models, got {}",
            by_model.len()
        )));
    }

    let report = build_report(&by_model)?;
    write_pretty_json(&out, &report)?;

    if let Some(csv_path) = csv {
        let sims = pairwise_similarities(&by_model)?;
        let mut buf = Vec::new();
        write_similarity_csv(&sims, &mut buf)?;
        store::write_atomic(&csv_path, &buf)?;
    }

    println!(
        "compared {} model(s): {} pair(s), {} test(s) -> {}",
        by_model.len(),
        report.pairs.len(),
        report.tests.len(),
        out.display()
    );
    Ok(())
}
