pub mod analyze;
pub mod experiment;
pub mod generate;
pub mod prepare;
pub mod rating;
pub mod score;
pub mod train;

use std::path::PathBuf;

use crate::config::{load_config, LoadedConfig};
use crate::error::Result;

/// Config file plus `--set section.key=value` overrides.
#[derive(Debug, Clone, clap::Args)]
pub struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config value, e.g. `--set train.epochs=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    /// Loads the config with `extra` overrides applied after the user's.
    pub fn load(&self, extra: &[String]) -> Result<LoadedConfig> {
        let mut all = self.overrides.clone();
        all.extend_from_slice(extra);
        load_config(&self.config, &all)
    }
}

/// `section.key=value` overrides for flags that were given.
pub(crate) fn flag_overrides(pairs: &[(&str, Option<String>)]) -> Vec<String> {
    pairs
        .iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| format!("{k}={v}")))
        .collect()
}
