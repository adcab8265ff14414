//! Exit-code discipline: 0 success, 1 usage, 2 data/validation,
//! 3 transport/backend, 4 integrity.

use ablate_core::attribution::AttributionError;
use ablate_core::analysis::AnalysisError;
use ablate_core::corpus::CorpusError;
use ablate_core::report::ReportError;
use ablate_core::scorer::ScoreError;
use ablate_core::semsim::SemSimError;
use ablate_core::server::ServerError;
use ablate_core::store::StoreError;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_TRANSPORT: u8 = 3;
pub const EXIT_INTEGRITY: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    pub fn transport(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_TRANSPORT,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

fn score_error_code(e: &ScoreError) -> u8 {
    match e {
        ScoreError::Transport { .. } | ScoreError::Backend { .. } | ScoreError::Protocol { .. } => {
            EXIT_TRANSPORT
        }
        _ => EXIT_DATA,
    }
}

fn attribution_error_code(e: &AttributionError) -> u8 {
    match e {
        AttributionError::SampleFailed { source, .. } => score_error_code(source),
        AttributionError::TooManyFailures { failures, .. } => {
            if failures
                .iter()
                .any(|f| attribution_error_code(f) == EXIT_TRANSPORT)
            {
                EXIT_TRANSPORT
            } else {
                EXIT_DATA
            }
        }
        _ => EXIT_DATA,
    }
}

fn semsim_error_code(e: &SemSimError) -> u8 {
    match e {
        SemSimError::Backend(inner) => score_error_code(inner),
        SemSimError::SampleFailed { source, .. } => semsim_error_code(source),
        SemSimError::TooManyFailures { failures, .. } => {
            if failures
                .iter()
                .any(|f| semsim_error_code(f) == EXIT_TRANSPORT)
            {
                EXIT_TRANSPORT
            } else {
                EXIT_DATA
            }
        }
        _ => EXIT_DATA,
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<ScoreError> for CliError {
    fn from(e: ScoreError) -> Self {
        CliError {
            code: score_error_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<AttributionError> for CliError {
    fn from(e: AttributionError) -> Self {
        CliError {
            code: attribution_error_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<SemSimError> for CliError {
    fn from(e: SemSimError) -> Self {
        CliError {
            code: semsim_error_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        let code = match e {
            StoreError::Integrity { .. } => EXIT_INTEGRITY,
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ServerError> for CliError {
    fn from(e: ServerError) -> Self {
        CliError::transport(e.to_string())
    }
}
