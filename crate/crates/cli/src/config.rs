//! Study configuration file and its merge with environment and flags.
//!
//! The file is TOML: a top-level `seed` plus one table per subcommand.
//! Precedence is flags, then `ASACD_SEED`, then the file, then defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use asacd_core::association::{TrainParams, DEFAULT_SMOOTHING};
use asacd_core::biomarker::DEFAULT_PERCENTILE;
use asacd_core::corpus::Sentiment;
use asacd_core::scorer::{AlignmentWeights, DEFAULT_ALPHA};
use asacd_core::simlab::DEFAULT_DOSE_SEEDS;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const ENV_CONFIG: &str = "ASACD_CONFIG";
pub const ENV_SEED: &str = "ASACD_SEED";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    /// Directory holding replacement `*.lex` files.
    pub lexicons: Option<PathBuf>,
    pub ingest: IngestSection,
    pub mine: MineSection,
    pub calibrate: CalibrateSection,
    pub synth: SynthSection,
    pub scorer: ScorerSection,
    pub simulate: SimulateSection,
    pub serve: ServeSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub text_column: String,
    pub sentiment_column: Option<String>,
    pub id_column: Option<String>,
    pub speaker_column: Option<String>,
    pub group_column: Option<String>,
    pub timestamp_column: Option<String>,
    /// Extra raw-label mappings on top of `0/1/2` and the label names.
    pub sentiment_values: BTreeMap<String, Sentiment>,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection {
            text_column: "text".into(),
            sentiment_column: Some("sentiment".into()),
            id_column: None,
            speaker_column: None,
            group_column: None,
            timestamp_column: None,
            sentiment_values: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MineSection {
    pub folds: usize,
    pub smoothing_k: f64,
    pub reg_l2: f64,
    pub lr: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for MineSection {
    fn default() -> Self {
        let p = TrainParams::default();
        MineSection {
            folds: 5,
            smoothing_k: DEFAULT_SMOOTHING,
            reg_l2: p.reg_l2,
            lr: p.lr,
            max_iter: p.max_iter,
            tol: p.tol,
        }
    }
}

impl MineSection {
    pub fn params(&self) -> TrainParams {
        TrainParams {
            reg_l2: self.reg_l2,
            lr: self.lr,
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub percentile: f64,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        CalibrateSection {
            percentile: DEFAULT_PERCENTILE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub dialogues: usize,
    /// `inclusive,neutral,generalising,exclusive` shares; shipped default when absent.
    pub dist: Option<String>,
    /// `blocked` (exact quotas per 1000 turns) or `independent`.
    pub sampling: String,
    pub banks: Option<PathBuf>,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            dialogues: 1000,
            dist: None,
            sampling: "blocked".into(),
            banks: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerSection {
    pub weights: [f64; 3],
    pub alpha: f64,
    /// Directory with `bigram_model.jsonl` and `cultural_reference.jsonl`.
    pub assets: Option<PathBuf>,
}

impl Default for ScorerSection {
    fn default() -> Self {
        ScorerSection {
            weights: AlignmentWeights::default().as_array(),
            alpha: DEFAULT_ALPHA,
            assets: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub preset: String,
    /// Trial config file; replaces the preset when set.
    pub trial_config: Option<PathBuf>,
    pub seeds: usize,
    pub doses: Vec<usize>,
    pub dose_seeds: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            preset: "paper-demo".into(),
            trial_config: None,
            seeds: 100,
            doses: Vec::new(),
            dose_seeds: DEFAULT_DOSE_SEEDS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub addr: String,
    /// Session log directory; sessions live in memory when absent.
    pub data_dir: Option<PathBuf>,
    pub fsync: bool,
}

impl Default for ServeSection {
    fn default() -> Self {
        ServeSection {
            addr: "127.0.0.1:8080".into(),
            data_dir: None,
            fsync: false,
        }
    }
}

impl FileConfig {
    pub fn parse(src: &str) -> Result<Self, CliError> {
        toml::from_str(src).map_err(|e| CliError::validation("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation("config", format!("{}: {e}", path.display())))?;
        Self::parse(&src)
    }
}

/// Environment lookups, injectable for tests.
pub type Env<'a> = &'a dyn Fn(&str) -> Option<String>;

/// Loads the config file named by the flag or `ASACD_CONFIG`, if any.
pub fn load(flag: Option<&Path>, env: Env) -> Result<FileConfig, CliError> {
    match flag
        .map(Path::to_path_buf)
        .or_else(|| env(ENV_CONFIG).map(PathBuf::from))
    {
        Some(p) => FileConfig::load(&p),
        None => Ok(FileConfig::default()),
    }
}

pub fn resolve_seed(flag: Option<u64>, env: Env, file: &FileConfig) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(raw) = env(ENV_SEED) {
        return raw.trim().parse().map_err(|_| {
            CliError::validation(
                "config",
                format!("{ENV_SEED}={raw:?} is not an unsigned integer"),
            )
        });
    }
    Ok(file.seed.unwrap_or(0))
}
