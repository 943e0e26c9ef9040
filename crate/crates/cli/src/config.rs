use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("service error: {0}")]
    Service(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Training(_) => 4,
            CliError::Service(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Everything that determined an artifact. Embedded, with the tool version,
/// in every file the CLI writes.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub tool_version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clusters_patients: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clusters_features: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    /// Command-specific settings.
    #[serde(flatten)]
    pub extra: BTreeMap<&'static str, Value>,
}

impl RunConfig {
    pub fn new(command: &'static str) -> Self {
        RunConfig {
            command,
            tool_version: decode_core::TOOL_VERSION,
            input: None,
            output: None,
            model: None,
            seed: None,
            weight: None,
            repeats: None,
            clusters_patients: None,
            clusters_features: None,
            budget: None,
            grid_step: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &'static str, value: impl Serialize) -> Self {
        self.extra
            .insert(key, serde_json::to_value(value).expect("setting serializes"));
        self
    }

    /// Checks value ranges and that inputs exist and outputs can be created,
    /// before any work starts.
    pub fn validate(&self) -> Result<()> {
        if let Some(w) = self.weight {
            if !(0.0..=1.0).contains(&w) {
                return Err(CliError::Usage(format!("--weight must lie in [0, 1], got {w}")));
            }
        }
        if let Some(s) = self.grid_step {
            if !(s > 0.0 && s <= 0.8) {
                return Err(CliError::Usage(format!("--grid-step must lie in (0, 0.8], got {s}")));
            }
        }
        for (flag, v) in [("--repeats", self.repeats), ("--budget", self.budget)] {
            if v == Some(0) {
                return Err(CliError::Usage(format!("{flag} must be at least 1")));
            }
        }
        for (flag, v) in [
            ("--clusters-patients", self.clusters_patients),
            ("--clusters-features", self.clusters_features),
        ] {
            if matches!(v, Some(k) if k < 2) {
                return Err(CliError::Usage(format!("{flag} must be at least 2")));
            }
        }
        for p in self.input.iter().chain(&self.model) {
            if !p.is_file() {
                return Err(CliError::Usage(format!("no such file: {}", p.display())));
            }
        }
        if let Some(p) = &self.output {
            check_parent(p)?;
        }
        Ok(())
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}

pub fn check_parent(p: &Path) -> Result<()> {
    match p.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(CliError::Usage(format!(
            "output directory does not exist: {}",
            dir.display()
        ))),
        _ => Ok(()),
    }
}
