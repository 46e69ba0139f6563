//! Experiment configuration: the single source of truth for corpus generation,
//! training and learning-curve runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::EvalConfig;
use crate::neighborhood::FeatureConfig;
use crate::synthcorpus::CorpusSpec;
use crate::training::TrainConfig;
use crate::transfer::{Regime, RegimeConfig};

pub const CROSS_LANGUAGE_VOCAB: usize = 2000;
pub const CROSS_DOCTYPE_VOCAB: usize = 4000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: CorpusSpec,
    pub target: CorpusSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default = "all_regimes")]
    pub regimes: Vec<Regime>,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Defaults to 2000 when source and target share a document type, else 4000.
    #[serde(default)]
    pub vocab_size: Option<usize>,
}

fn all_regimes() -> Vec<Regime> {
    Regime::ALL.to_vec()
}

impl ExperimentConfig {
    /// Parses TOML when the extension is `.toml`, JSON otherwise, then validates.
    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parse_err = |message: String| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        };
        let cfg: ExperimentConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        } else {
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(de).map_err(|e| parse_err(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size.unwrap_or(if self.source.doc_type == self.target.doc_type {
            CROSS_LANGUAGE_VOCAB
        } else {
            CROSS_DOCTYPE_VOCAB
        })
    }

    pub fn regime_config(&self) -> RegimeConfig {
        RegimeConfig {
            train: self.train.clone(),
            features: self.features,
            vocab_size: self.vocab_size(),
        }
    }

    pub fn source_dir(&self) -> PathBuf {
        self.output_dir.join("corpora").join("source")
    }

    pub fn target_dir(&self) -> PathBuf {
        self.output_dir.join("corpora").join("target")
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.output_dir.join("runs")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        for (which, spec) in [("source", &self.source), ("target", &self.target)] {
            if let Err(e) = spec.validate() {
                return invalid(format!("{which}: {e}"));
            }
        }
        if let Err(e) = self.train.validate() {
            return invalid(e.to_string());
        }
        if let Err(e) = self.features.validate() {
            return invalid(e.to_string());
        }
        if self.vocab_size() < 2 {
            return invalid(format!("vocab_size {} must be >= 2", self.vocab_size()));
        }
        if self.regimes.is_empty() {
            return invalid("regimes is empty".into());
        }
        if self.seeds.is_empty() {
            return invalid("seeds is empty".into());
        }
        if self.sizes.is_empty() || self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return invalid(format!("sizes must be non-empty and strictly ascending: {:?}", self.sizes));
        }
        if self.sizes[0] < 2 {
            return invalid("every target size must be >= 2".into());
        }
        let available = self.target.n_docs - self.target.n_test();
        if let Some(&max) = self.sizes.last() {
            if max > available {
                return invalid(format!(
                    "largest size {max} exceeds the {available} target training documents"
                ));
            }
        }
        if self.target.n_test() == 0 {
            return invalid("target needs a held-out test split".into());
        }
        Ok(())
    }
}
