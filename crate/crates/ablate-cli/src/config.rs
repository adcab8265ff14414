//! Optional JSON config file mirroring the command-line flags.
//!
//! Precedence: flags beat `ABLATE_*` environment variables (clap wires
//! that), and both beat config-file values; defaults apply last. Keys
//! use the flag names with underscores, e.g.
//! `{"corpus": "c.jsonl", "model_id": "fft", "alpha": 1.0}`.

use std::path::{Path, PathBuf};

use crate::error::CliError;

#[derive(Debug, Default)]
pub struct FileConfig {
    values: serde_json::Map<String, serde_json::Value>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let values: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text)
            .map_err(|e| {
                CliError::usage(format!("config {} is not a JSON object: {e}", path.display()))
            })?;
        Ok(FileConfig { values })
    }

    pub fn string(&self, key: &str) -> Option<String> {
        self.values.get(key)?.as_str().map(str::to_string)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.string(key).map(PathBuf::from)
    }

    pub fn float(&self, key: &str) -> Option<f64> {
        self.values.get(key)?.as_f64()
    }

    pub fn unsigned(&self, key: &str) -> Option<u64> {
        self.values.get(key)?.as_u64()
    }

    pub fn string_list(&self, key: &str) -> Option<Vec<String>> {
        let list = self.values.get(key)?.as_array()?;
        list.iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect()
    }

    pub fn path_list(&self, key: &str) -> Option<Vec<PathBuf>> {
        Some(self.string_list(key)?.into_iter().map(PathBuf::from).collect())
    }
}

/// Flag (or env) value if present, else config value, else default.
pub fn resolve<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

/// Same, but the setting is mandatory.
pub fn resolve_required<T>(
    flag: Option<T>,
    config: Option<T>,
    what: &str,
) -> Result<T, CliError> {
    flag.or(config)
        .ok_or_else(|| CliError::usage(format!("missing required setting: {what}")))
}
