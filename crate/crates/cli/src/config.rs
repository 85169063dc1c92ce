//! Run configuration files and the config echo written next to outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use jigsaw_core::{GaConfig, PuzzleMode, TrainConfig};
use serde::{Deserialize, Serialize};

pub const ECHO_NAME: &str = "config.json";

/// Values a `--config` file may set. Command-line flags take precedence.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub tile_size: Option<usize>,
    pub mode: Option<PuzzleMode>,
    pub seed: Option<u64>,
    pub val_fraction: Option<f64>,
    pub threads: Option<usize>,
    pub train: Option<TrainConfig>,
    pub ga: Option<GaConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        parse_config(&text, is_json).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Parses a config body; `json` selects JSON over TOML.
pub fn parse_config(text: &str, json: bool) -> Result<FileConfig> {
    if json {
        Ok(serde_json::from_str(text)?)
    } else {
        Ok(toml::from_str(text)?)
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub paths: BTreeMap<&'static str, PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tile_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<PuzzleMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ga: Option<GaConfig>,
    pub threads: usize,
}

impl RunConfig {
    pub fn new(subcommand: &'static str, threads: usize) -> Self {
        RunConfig {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            paths: BTreeMap::new(),
            tile_size: None,
            mode: None,
            seed: None,
            val_fraction: None,
            train: None,
            ga: None,
            threads,
        }
    }

    pub fn path(mut self, name: &'static str, p: &Path) -> Self {
        self.paths.insert(name, p.to_path_buf());
        self
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        fs::write(path, json).with_context(|| format!("writing {}", path.display()))
    }
}

/// Echo location for a run whose primary output is the file `out`.
pub fn echo_beside(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".config.json");
    out.with_file_name(name)
}

pub fn check_fraction(v: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&v) {
        bail!("validation fraction must be in [0, 1), got {v}");
    }
    Ok(v)
}
