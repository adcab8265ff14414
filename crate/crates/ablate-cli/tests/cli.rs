//! CLI-level behavior: exit codes, flag/env/config precedence, and the
//! mock-server subcommand as a real child process.

mod common;

use std::io::Read;
use std::process::{Command, Stdio};
use std::time::Duration;

use common::{assert_ok, assert_same_bytes, fixture_corpus, run_cli};

#[test]
fn missing_corpus_file_names_the_path_and_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let r = run_cli(
        &[
            "attribute",
            "--corpus",
            "/nonexistent/corpus.jsonl",
            "--backend",
            "reference",
            "--model-id",
            "m",
            "--out",
            tmp.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(r.status, Some(2), "stderr: {}", r.stderr);
    assert!(r.stderr.contains("/nonexistent/corpus.jsonl"));
}

#[test]
fn missing_required_flag_is_usage_error() {
    let r = run_cli(&["attribute", "--backend", "reference"], &[]);
    assert_eq!(r.status, Some(1), "stderr: {}", r.stderr);
}

#[test]
fn unknown_heatmap_mode_is_usage_error() {
    let r = run_cli(
        &[
            "report",
            "heatmap",
            "--inputs",
            "x.jsonl",
            "--mode",
            "sideways",
            "--out",
            "h.html",
        ],
        &[],
    );
    assert_eq!(r.status, Some(1), "stderr: {}", r.stderr);
    assert!(r.stderr.contains("sideways"));
}

#[test]
fn unreachable_endpoint_exits_3() {
    let port = {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        listener.local_addr().unwrap().port()
    };
    let tmp = tempfile::tempdir().unwrap();
    let r = run_cli(
        &[
            "attribute",
            "--corpus",
            fixture_corpus().to_str().unwrap(),
            "--endpoint",
            &format!("http://127.0.0.1:{port}"),
            "--model-id",
            "m",
            "--out",
            tmp.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(r.status, Some(3), "stderr: {}", r.stderr);
}

#[test]
fn backend_and_endpoint_are_mutually_exclusive() {
    let tmp = tempfile::tempdir().unwrap();
    let r = run_cli(
        &[
            "attribute",
            "--corpus",
            fixture_corpus().to_str().unwrap(),
            "--backend",
            "reference",
            "--endpoint",
            "http://127.0.0.1:1",
            "--model-id",
            "m",
            "--out",
            tmp.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(r.status, Some(1), "stderr: {}", r.stderr);
}

fn attribute_fixture(dir: &std::path::Path, model: &str, alpha: &str) -> std::path::PathBuf {
    let r = run_cli(
        &[
            "attribute",
            "--corpus",
            fixture_corpus().to_str().unwrap(),
            "--backend",
            "reference",
            "--model-id",
            model,
            "--alpha",
            alpha,
            "--out",
            dir.to_str().unwrap(),
        ],
        &[],
    );
    assert_ok(&r, "attribute");
    dir.join("attributions").join(format!("{model}.jsonl"))
}

#[test]
fn compare_of_disjoint_sample_sets_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let a = attribute_fixture(&tmp.path().join("a"), "m1", "1.0");
    // corpus with one renamed sample id
    let text = std::fs::read_to_string(fixture_corpus()).unwrap();
    let edited = text.replace("\"id\":\"r01\"", "\"id\":\"r99\"");
    let edited_path = tmp.path().join("edited.jsonl");
    std::fs::write(&edited_path, edited).unwrap();
    let r = run_cli(
        &[
            "attribute",
            "--corpus",
            edited_path.to_str().unwrap(),
            "--backend",
            "reference",
            "--model-id",
            "m2",
            "--out",
            tmp.path().join("b").to_str().unwrap(),
        ],
        &[],
    );
    assert_ok(&r, "attribute edited corpus");
    let b = tmp.path().join("b/attributions/m2.jsonl");

    let r = run_cli(
        &[
            "compare",
            "--inputs",
            &format!("{},{}", a.display(), b.display()),
            "--out",
            tmp.path().join("analysis.json").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(r.status, Some(2), "stderr: {}", r.stderr);
    assert!(r.stderr.contains("r01") || r.stderr.contains("r99"));
}

#[test]
fn compare_of_two_identical_models_succeeds_with_unit_cosines() {
    let tmp = tempfile::tempdir().unwrap();
    let a = attribute_fixture(&tmp.path().join("a"), "m1", "1.0");
    let b = attribute_fixture(&tmp.path().join("b"), "m2", "1.0");
    let out = tmp.path().join("analysis.json");
    let r = run_cli(
        &[
            "compare",
            "--inputs",
            &format!("{},{}", a.display(), b.display()),
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert_ok(&r, "compare identical");
    let report: ablate_core::analysis::AnalysisReport =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report.pairs.len(), 1);
    for sample in &report.pairs[0].samples {
        assert!((sample.cosine - 1.0).abs() < 1e-12);
    }
    // two models give one pair and no pair-of-pairs pivots
    assert!(report.tests.is_empty());
}

#[test]
fn evaluate_identical_scripts_scores_one_and_honors_beta() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("eval.json");
    // fixture model "fft" has generated == reference on every sample
    let r = run_cli(
        &[
            "evaluate",
            "--corpus",
            fixture_corpus().to_str().unwrap(),
            "--model-ids",
            "fft",
            "--beta",
            "3",
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert_ok(&r, "evaluate");
    let eval: ablate_core::semsim::CorpusEvaluation =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(eval.beta, 3.0);
    for sample in &eval.models[0].samples {
        assert!((sample.precision - 1.0).abs() < 1e-9);
        assert!((sample.recall - 1.0).abs() < 1e-9);
        assert!((sample.f1.unwrap() - 1.0).abs() < 1e-9);
        assert!((sample.f_beta.unwrap() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn evaluate_missing_model_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let r = run_cli(
        &[
            "evaluate",
            "--corpus",
            fixture_corpus().to_str().unwrap(),
            "--model-ids",
            "no-such-model",
            "--out",
            tmp.path().join("eval.json").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(r.status, Some(2), "stderr: {}", r.stderr);
    assert!(r.stderr.contains("no-such-model"));
}

#[test]
fn boxplot_renders_from_both_input_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    let a = attribute_fixture(&tmp.path().join("a"), "m1", "0.7");
    let b = attribute_fixture(&tmp.path().join("b"), "m2", "1.4");
    let analysis = tmp.path().join("analysis.json");
    let r = run_cli(
        &[
            "compare",
            "--inputs",
            &format!("{},{}", a.display(), b.display()),
            "--out",
            analysis.to_str().unwrap(),
        ],
        &[],
    );
    assert_ok(&r, "compare");
    let svg1 = tmp.path().join("cosine.svg");
    let r = run_cli(
        &[
            "report",
            "boxplot",
            "--input",
            analysis.to_str().unwrap(),
            "--out",
            svg1.to_str().unwrap(),
        ],
        &[],
    );
    assert_ok(&r, "boxplot from analysis");
    assert!(std::fs::read_to_string(&svg1)
        .unwrap()
        .contains("data-label=\"m1-vs-m2\""));

    let eval = tmp.path().join("eval.json");
    let r = run_cli(
        &[
            "evaluate",
            "--corpus",
            fixture_corpus().to_str().unwrap(),
            "--model-ids",
            "fft,lora,qlora",
            "--out",
            eval.to_str().unwrap(),
        ],
        &[],
    );
    assert_ok(&r, "evaluate");
    let svg2 = tmp.path().join("fbeta.svg");
    let r = run_cli(
        &[
            "report",
            "boxplot",
            "--input",
            eval.to_str().unwrap(),
            "--metric",
            "fbeta",
            "--out",
            svg2.to_str().unwrap(),
        ],
        &[],
    );
    assert_ok(&r, "boxplot from evaluation");
    let svg_text = std::fs::read_to_string(&svg2).unwrap();
    assert_eq!(svg_text.matches("class=\"box-group\"").count(), 3);

    // wrong metric for the input kind
    let r = run_cli(
        &[
            "report",
            "boxplot",
            "--input",
            analysis.to_str().unwrap(),
            "--metric",
            "f1",
            "--out",
            tmp.path().join("x.svg").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(r.status, Some(1), "stderr: {}", r.stderr);
}

#[test]
fn env_vars_fill_in_flags_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let out_env = tmp.path().join("from-env");
    let r = run_cli(
        &["attribute"],
        &[
            ("ABLATE_CORPUS", fixture_corpus().to_str().unwrap()),
            ("ABLATE_BACKEND", "reference"),
            ("ABLATE_MODEL_ID", "env-model"),
            ("ABLATE_OUT", out_env.to_str().unwrap()),
        ],
    );
    assert_ok(&r, "attribute from env");
    assert!(out_env.join("attributions/env-model.jsonl").exists());

    // flag beats the environment
    let out_flag = tmp.path().join("from-flag");
    let r = run_cli(
        &[
            "attribute",
            "--model-id",
            "flag-model",
            "--out",
            out_flag.to_str().unwrap(),
        ],
        &[
            ("ABLATE_CORPUS", fixture_corpus().to_str().unwrap()),
            ("ABLATE_BACKEND", "reference"),
            ("ABLATE_MODEL_ID", "env-model"),
            ("ABLATE_OUT", out_env.to_str().unwrap()),
        ],
    );
    assert_ok(&r, "attribute flag-over-env");
    assert!(out_flag.join("attributions/flag-model.jsonl").exists());
}

#[test]
fn config_file_fills_in_flags_and_env_wins() {
    let tmp = tempfile::tempdir().unwrap();
    let out_cfg = tmp.path().join("from-config");
    let config_path = tmp.path().join("run.json");
    std::fs::write(
        &config_path,
        serde_json::json!({
            "corpus": fixture_corpus().to_str().unwrap(),
            "backend": "reference",
            "model_id": "config-model",
            "out": out_cfg.to_str().unwrap(),
            "alpha": 0.9,
        })
        .to_string(),
    )
    .unwrap();

    let r = run_cli(&["attribute", "--config", config_path.to_str().unwrap()], &[]);
    assert_ok(&r, "attribute from config");
    assert!(out_cfg.join("attributions/config-model.jsonl").exists());

    // environment beats the config file
    let out_env = tmp.path().join("env-beats-config");
    let r = run_cli(
        &["attribute", "--config", config_path.to_str().unwrap()],
        &[
            ("ABLATE_MODEL_ID", "env-model"),
            ("ABLATE_OUT", out_env.to_str().unwrap()),
        ],
    );
    assert_ok(&r, "attribute env-over-config");
    assert!(out_env.join("attributions/env-model.jsonl").exists());
}

#[test]
fn attribution_output_is_reproducible_across_parallelism() {
    let tmp = tempfile::tempdir().unwrap();
    let base = attribute_fixture(&tmp.path().join("p1"), "m", "1.0");
    let r = run_cli(
        &[
            "attribute",
            "--corpus",
            fixture_corpus().to_str().unwrap(),
            "--backend",
            "reference",
            "--model-id",
            "m",
            "--parallel",
            "8",
            "--out",
            tmp.path().join("p8").to_str().unwrap(),
        ],
        &[],
    );
    assert_ok(&r, "attribute parallel 8");
    assert_same_bytes(&base, &tmp.path().join("p8/attributions/m.jsonl"));
}

#[test]
fn manifest_records_the_run_configuration() {
    let tmp = tempfile::tempdir().unwrap();
    attribute_fixture(tmp.path(), "m", "1.0");
    let manifest =
        ablate_core::store::read_manifest(&tmp.path().join("manifest.json")).unwrap();
    assert_eq!(manifest.models[0].model_id, "m");
    assert_eq!(manifest.models[0].endpoint, "reference");
    assert_eq!(manifest.alpha, 1.0);
    assert_eq!(manifest.tool_version, env!("CARGO_PKG_VERSION"));
    // digest verification against the real fixture bytes
    let corpus_bytes = std::fs::read(fixture_corpus()).unwrap();
    manifest.verify_corpus(&corpus_bytes).unwrap();
    assert!(manifest.verify_corpus(b"tampered").is_err());
}

#[test]
fn mock_server_subcommand_serves_the_protocol() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_ablate"))
        .args(["mock-server", "--port", "0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .expect("server starts");
    let mut stdout = child.stdout.take().unwrap();
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    // read the announcement line
    loop {
        let n = stdout.read(&mut byte).unwrap();
        if n == 0 || byte[0] == b'\n' {
            break;
        }
        line.push(byte[0]);
        assert!(line.len() < 200, "announcement line too long");
    }
    let line = String::from_utf8(line).unwrap();
    let url = line
        .strip_prefix("listening on ")
        .unwrap_or_else(|| panic!("unexpected announcement: {line}"))
        .to_string();

    let agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(5)))
        .build()
        .new_agent();
    let health: serde_json::Value = agent
        .get(format!("{url}/v1/health"))
        .call()
        .unwrap()
        .body_mut()
        .read_json()
        .unwrap();
    assert_eq!(health["status"], "ok");
    assert_eq!(health["model"], "reference-unigram");

    let score: serde_json::Value = agent
        .post(format!("{url}/v1/score"))
        .send_json(serde_json::json!({"context": "a b", "target": "a"}))
        .unwrap()
        .body_mut()
        .read_json()
        .unwrap();
    let lp = score["log_prob"].as_f64().unwrap();
    assert!((lp - 0.5f64.ln()).abs() < 1e-9);

    child.kill().unwrap();
    let _ = child.wait();
}

#[test]
fn mock_server_port_in_use_exits_3() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    let r = run_cli(&["mock-server", "--port", &port.to_string()], &[]);
    assert_eq!(r.status, Some(3), "stderr: {}", r.stderr);
}
