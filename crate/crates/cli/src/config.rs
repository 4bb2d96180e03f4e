//! Configuration file handling: the experiment schema from the core crate
//! plus driver-level blocks (sweep axis, failure policy).

use anyhow::{Context as _, Result};
use serde::Deserialize;
use std::path::Path;
use turbem::experiment::{ExperimentConfig, SweepAxis};

#[derive(Debug, Clone, Deserialize)]
pub struct FileConfig {
    #[serde(flatten)]
    pub experiment: ExperimentConfig,
    /// Axis for the `sweep` subcommand.
    #[serde(default)]
    pub sweep: Option<SweepAxis>,
    /// Treat forecast divergence as a fatal error (exit code 3).
    #[serde(default)]
    pub fail_on_divergence: bool,
}

pub fn load(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let cfg: FileConfig = toml::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    cfg.experiment
        .validate()
        .with_context(|| format!("validating config {}", path.display()))?;
    Ok(cfg)
}
