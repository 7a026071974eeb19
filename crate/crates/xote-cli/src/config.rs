//! Experiment configuration file.
//!
//! A single JSON document with a schema version; command-line flags
//! override individual keys after loading.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use xote::error::{Error, Result};
use xote::model::ModelConfig;
use xote::trainer::TrainConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataPaths {
    #[serde(default)]
    pub train: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Languages participating in the experiment.
    pub languages: Vec<String>,
    /// Per-language corpus files (SemEval XML or the CoNLL-style format).
    #[serde(default)]
    pub data: BTreeMap<String, DataPaths>,
    /// Per-language embedding files (.vec text or .xemb cache).
    #[serde(default)]
    pub embeddings: BTreeMap<String, PathBuf>,
    /// Optional per-language projection (.xprj) applied after loading, for
    /// aligning that language's vectors into the shared space.
    #[serde(default)]
    pub projections: BTreeMap<String, PathBuf>,
    /// Vocabulary cap applied when loading .vec files.
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Disable the lowercase fallback in embedding lookup.
    #[serde(default)]
    pub no_lowercase_fallback: bool,
}

fn default_cap() -> usize {
    xote::embeddings::DEFAULT_VOCAB_CAP
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("config {}: {e}", path.display())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "config schema version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        if cfg.languages.is_empty() {
            return Err(Error::Config("config lists no languages".into()));
        }
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// Apply command-line overrides on top of the loaded file.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        out: Option<PathBuf>,
        embeddings: &[(String, PathBuf)],
        cap: Option<usize>,
    ) {
        if let Some(seed) = seed {
            self.train.seeds = vec![seed];
        }
        if let Some(out) = out {
            self.output_dir = out;
        }
        for (lang, path) in embeddings {
            self.embeddings.insert(lang.clone(), path.clone());
        }
        if let Some(cap) = cap {
            self.cap = cap;
        }
    }
}

/// Parse a repeatable `lang=path` flag value.
pub fn parse_lang_path(value: &str) -> std::result::Result<(String, PathBuf), String> {
    match value.split_once('=') {
        Some((lang, path)) if !lang.is_empty() && !path.is_empty() => {
            Ok((lang.to_string(), PathBuf::from(path)))
        }
        _ => Err(format!("expected lang=path, got {value:?}")),
    }
}
