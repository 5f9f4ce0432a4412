//! Experiment configuration: a TOML document with every key validated at load.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::EnvConfig;
use crate::harness::experiments::ReproduceConfig;
use crate::error::{Error, Result};
use crate::rl::agent::AgentConfig;
use crate::rl::search::SearchConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Greedy evaluation episodes run after training.
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    /// Environment steps between agent updates.
    pub train_every: usize,
    /// Episodes averaged for the final-reward summary.
    pub final_window: usize,
    /// Keep one CSV row per training slot.
    pub record_steps: bool,
    pub save_checkpoint: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 500,
            eval_episodes: 2,
            seeds: vec![0],
            train_every: 1,
            final_window: 50,
            record_steps: true,
            save_checkpoint: true,
        }
    }
}

/// Switches that remove one ingredient from the environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    pub renewable: bool,
    pub csi_error: bool,
    pub hardware_impairment: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation { renewable: true, csi_error: true, hardware_impairment: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub name: String,
    pub output_dir: PathBuf,
    pub train: TrainConfig,
    pub ablation: Ablation,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub search: SearchConfig,
    pub reproduce: ReproduceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            output_dir: PathBuf::from("runs"),
            train: TrainConfig::default(),
            ablation: Ablation::default(),
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
            search: SearchConfig::default(),
            reproduce: ReproduceConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates; errors name the offending key.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.message().to_string()))?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path.is_empty() || path == "." { "<document>".to_string() } else { path }, e.into_inner().message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), format!("cannot read config: {e}")))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("config does not serialize: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::config("name", "must be a non-empty file name"));
        }
        if self.train.episodes == 0 {
            return Err(Error::config("train.episodes", "must be >= 1"));
        }
        if self.train.seeds.is_empty() {
            return Err(Error::config("train.seeds", "need at least one seed"));
        }
        if self.train.train_every == 0 {
            return Err(Error::config("train.train_every", "must be >= 1"));
        }
        if self.train.final_window == 0 {
            return Err(Error::config("train.final_window", "must be >= 1"));
        }
        self.env.validate()?;
        self.agent.validate()?;
        self.search.validate()?;
        self.reproduce.validate()
    }

    /// Environment with the ablation switches applied.
    pub fn effective_env(&self) -> EnvConfig {
        let mut env = self.env.clone();
        env.use_renewable &= self.ablation.renewable;
        if !self.ablation.csi_error {
            env.zeta = 0.0;
        }
        if !self.ablation.hardware_impairment {
            env.phi = 0.0;
        }
        env
    }

    /// SHA-256 of the serialized configuration.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml_string()?.as_bytes())))
    }

    /// Overrides one dotted key with a TOML literal (bare words are taken as
    /// strings) and revalidates.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut root = toml::Table::try_from(self).map_err(|e| Error::invalid(e.to_string()))?;
        let parts: Vec<&str> = key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::config(key, "empty key segment"));
        }
        let mut table = &mut root;
        for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
            table = match table.get_mut(*part) {
                Some(toml::Value::Table(t)) => t,
                _ => return Err(Error::config(parts[..=i].join("."), "not a table")),
            };
        }
        let leaf = parts[parts.len() - 1];
        table.insert(leaf.to_string(), parse_literal(value));
        let text = toml::to_string(&root).map_err(|e| Error::invalid(e.to_string()))?;
        Self::from_toml_str(&text)
    }
}

fn parse_literal(value: &str) -> toml::Value {
    let doc = format!("v = {value}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(value.to_string())),
        Err(_) => toml::Value::String(value.to_string()),
    }
}
