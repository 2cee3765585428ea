//! Files describing a run well enough to repeat it.

use crate::CliError;
use pude::data::SynthSpec;
use pude::eval::{MethodSpec, ThresholdPolicy};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Where the LP/U split of a training run came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum TaskSource {
    Sampled { lp_count: usize, task_seed: u64 },
    File { path: PathBuf },
}

/// `config.json` of a `train` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub model: MethodSpec,
    pub seed: u64,
    pub corpus: PathBuf,
    pub corpus_sha256: String,
    #[serde(default)]
    pub tokens: Option<PathBuf>,
    pub task: TaskSource,
}

/// `eval.json` of an `eval` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub command: String,
    pub model_dir: PathBuf,
    pub corpus: PathBuf,
    pub policy: ThresholdPolicy,
    pub seed: u64,
    pub config_hash: String,
}

/// `config.json` of a `sweep` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub command: String,
    pub corpus: PathBuf,
    pub pool: PathBuf,
    #[serde(default)]
    pub tokens: Option<PathBuf>,
    pub methods: Vec<MethodSpec>,
    pub ratios: Vec<f64>,
    pub seeds: Vec<u64>,
}

/// `synth.json` next to a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub command: String,
    pub spec: SynthSpec,
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("config serializes");
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Reads a JSON file; malformed content is a configuration error.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
