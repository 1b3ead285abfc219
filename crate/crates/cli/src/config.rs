//! TOML configuration. Every command-line option has a key here; options
//! given on the command line win.

use std::fs;
use std::path::{Path, PathBuf};

use clipattr::{EmbedderConfig, Error, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub embedder: EmbedderConfig,
    pub ingest: IngestCfg,
    pub embed: EmbedCfg,
    pub index: IndexCfg,
    pub query: QueryCfg,
    pub calibrate: CalibrateCfg,
    pub abx: AbxCfg,
    pub sweep: SweepCfg,
    pub eval: EvalCfg,
    pub synth: SynthCfg,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestCfg {
    pub out: Option<PathBuf>,
    pub songs: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedCfg {
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexCfg {
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub ef_construction: Option<usize>,
    pub ef_search: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryCfg {
    pub index: Option<PathBuf>,
    pub songs: Option<PathBuf>,
    pub prompt: Option<PathBuf>,
    pub k_clips: Option<usize>,
    pub k_songs: Option<usize>,
    pub threshold: Option<f64>,
    pub profile: Option<PathBuf>,
    pub mode: Option<String>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateCfg {
    pub queries: Option<usize>,
    pub top: Option<usize>,
    pub baseline_pairs: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbxCfg {
    pub prompts: Option<usize>,
    pub seed: Option<u64>,
    pub format: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepCfg {
    pub index: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub grid: Option<String>,
    pub targets: Option<usize>,
    pub seed: Option<u64>,
    pub mode: Option<String>,
    pub k_clips: Option<usize>,
    pub partners: Option<String>,
    pub partner_manifest: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub format: Option<String>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalCfg {
    pub index: Option<PathBuf>,
    pub songs: Option<PathBuf>,
    pub thresholds: Option<Vec<f64>>,
    pub profile: Option<PathBuf>,
    pub k_clips: Option<usize>,
    pub mode: Option<String>,
    pub format: Option<String>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthCfg {
    pub songs: Option<usize>,
    pub seconds: Option<f64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let cfg: Config = toml::from_str(&text).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))?;
        cfg.embedder.validate()?;
        Ok(cfg)
    }
}
