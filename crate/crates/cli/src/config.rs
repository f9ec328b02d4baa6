//! Optional `key = value` configuration file (TOML syntax). Values given on
//! the command line take precedence over the file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub topology: Option<String>,
    pub topologies: Option<Vec<String>>,
    pub algorithm: Option<String>,
    pub problem: Option<String>,
    pub targets: Option<PathBuf>,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub sigma2: Option<f64>,
    pub gamma: Option<f64>,
    pub steps: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub record_every: Option<u64>,
    pub tail_fraction: Option<f64>,
    pub alphas: Option<Vec<f64>>,
    pub self_weights: Option<Vec<f64>>,
    pub noise: Option<String>,
    pub field: Option<String>,
    pub grid_step: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|msg| CliError::Config {
            path: path.to_path_buf(),
            msg,
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}
