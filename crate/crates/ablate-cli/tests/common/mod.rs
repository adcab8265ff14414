//! Helpers shared by the CLI integration and acceptance suites.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// The 10-sample fixture corpus at the workspace root.
pub fn fixture_corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures/corpus.jsonl")
        .canonicalize()
        .expect("fixture corpus exists")
}

pub struct CliResult {
    pub status: Option<i32>,
    pub stdout: String,
    pub stderr: String,
}

/// Run the `ablate` binary with the given arguments and environment
/// overrides, capturing output.
pub fn run_cli(args: &[&str], envs: &[(&str, &str)]) -> CliResult {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ablate"));
    cmd.args(args);
    // keep runs hermetic from the ambient environment
    for (key, _) in std::env::vars() {
        if key.starts_with("ABLATE_") {
            cmd.env_remove(&key);
        }
    }
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let Output {
        status,
        stdout,
        stderr,
    } = cmd.output().expect("binary runs");
    CliResult {
        status: status.code(),
        stdout: String::from_utf8_lossy(&stdout).into_owned(),
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
    }
}

pub fn assert_ok(result: &CliResult, what: &str) {
    assert_eq!(
        result.status,
        Some(0),
        "{what} failed\nstdout: {}\nstderr: {}",
        result.stdout,
        result.stderr
    );
}

/// Byte equality of two files with a readable failure message.
pub fn assert_same_bytes(a: &Path, b: &Path) {
    let ba = std::fs::read(a).unwrap_or_else(|e| panic!("read {}: {e}", a.display()));
    let bb = std::fs::read(b).unwrap_or_else(|e| panic!("read {}: {e}", b.display()));
    assert!(
        ba == bb,
        "artifacts differ: {} vs {} ({} vs {} bytes)",
        a.display(),
        b.display(),
        ba.len(),
        bb.len()
    );
}
