//! `ablate mock-server` — serve the reference scorer and mock embedder
//! over the wire protocol until interrupted.

use ablate_core::server::{MockServerConfig, RunningServer};

use crate::config::{resolve, FileConfig};
use crate::error::CliError;
use crate::MockServerArgs;

pub fn run(args: MockServerArgs, file_config: &FileConfig) -> Result<(), CliError> {
    let host = resolve(
        args.host,
        file_config.string("host"),
        "127.0.0.1".to_string(),
    );
    let port = resolve(
        args.port,
        file_config.unsigned("port").map(|v| v as u16),
        8080,
    );
    let alpha = resolve(args.alpha, file_config.float("alpha"), 1.0);
    let embed_dim = resolve(
        args.embed_dim,
        file_config.unsigned("embed_dim").map(|v| v as usize),
        64,
    );
    let model_name = resolve(
        args.model_name,
        file_config.string("model_name"),
        "reference-unigram".to_string(),
    );
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(CliError::usage(format!(
            "alpha must be a positive finite real, got {alpha}"
        )));
    }
    if embed_dim < 8 {
        return Err(CliError::usage(format!(
            "embed dimension must be at least 8, got {embed_dim}"
        )));
    }

    let server = RunningServer::bind(
        &format!("{host}:{port}"),
        MockServerConfig {
            alpha,
            embed_dim,
            model_name,
        },
    )?;
    println!("listening on {}", server.base_url());
    use std::io::Write;
    let _ = std::io::stdout().flush();

    // serve until the process is interrupted; the server writes no files
    loop {
        std::thread::park();
    }
}
