//! Fit configuration and run manifests.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use msm_core::sampler::{InitMode, McmcConfig, PriorConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// JSON config for `fit`. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub priors: PriorConfig,
    pub mcmc: McmcConfig,
    /// Overrides `mcmc.anchor` when present.
    pub anchor: Option<bool>,
    /// Overrides `mcmc.init` when present.
    pub init: Option<InitMode>,
    pub include_initial_sojourn: bool,
    pub standardize_covariates: bool,
}

impl FitConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FitConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::file(path, e))
    }

    /// The sampler config after applying overrides.
    pub fn resolved(&self, anchor_flag: bool, seed: Option<u64>) -> McmcConfig {
        let mut m = self.mcmc.clone();
        if let Some(a) = self.anchor {
            m.anchor = a;
        }
        m.anchor |= anchor_flag;
        if let Some(i) = self.init {
            m.init = i;
        }
        if let Some(s) = seed {
            m.seed = s;
        }
        m
    }
}

/// Written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub argv: Vec<String>,
    pub inputs: BTreeMap<String, String>,
    pub config_path: Option<String>,
    /// Fully resolved configuration.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub output_dir: String,
    pub outputs: Vec<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub(crate) fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &str, output_dir: &Path) -> Self {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            argv: std::env::args().collect(),
            inputs: BTreeMap::new(),
            config_path: None,
            config: serde_json::Value::Null,
            seed: None,
            output_dir: output_dir.display().to_string(),
            outputs: Vec::new(),
            started_unix: unix_now(),
            finished_unix: 0,
        }
    }

    pub fn input(&mut self, name: &str, path: Option<&Path>) {
        if let Some(p) = path {
            self.inputs.insert(name.into(), p.display().to_string());
        }
    }

    pub fn write(mut self, dir: &Path) -> Result<()> {
        self.finished_unix = unix_now();
        self.outputs.sort();
        let json = serde_json::to_string_pretty(&self).map_err(CliError::runtime)?;
        crate::io::write_string(&dir.join("manifest.json"), &(json + "\n"))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::file(path, e))
    }
}
