//! The pipeline configuration file and the hashes that tie artifacts to it.
//!
//! Each artifact records the hash of the config sections that influenced
//! it, so editing e.g. the clustering section does not invalidate trained
//! checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{ProbeConfig, UmapConfig};
use crate::augment::AugmentParams;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::graph::GraphParams;
use crate::synth::SynthConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Pca,
    Umap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub reduction: Reduction,
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    pub umap: UmapConfig,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            reduction: Reduction::Umap,
            k_min: 2,
            k_max: 25,
            seed: 0,
            umap: UmapConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Keep every `stride`-th frame.
    pub stride: u64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { stride: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub min_triplets: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            min_triplets: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub ingest: IngestConfig,
    pub synthetic: SynthConfig,
    pub graph: GraphParams,
    pub augment: AugmentParams,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub probe: ProbeConfig,
    pub cluster: ClusterConfig,
}

/// Pipeline stage whose artifacts carry a hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Scenes,
    Graphs,
    Model,
    Eval,
    Cluster,
}

impl Stage {
    fn sections(self) -> &'static [&'static str] {
        match self {
            Stage::Scenes => &["ingest", "synthetic"],
            Stage::Graphs => &["ingest", "synthetic", "graph"],
            Stage::Model => &["ingest", "synthetic", "graph", "augment", "encoder", "train"],
            Stage::Eval => &["ingest", "synthetic", "graph", "augment", "encoder", "train", "eval", "probe"],
            Stage::Cluster => &["ingest", "synthetic", "graph", "augment", "encoder", "train", "cluster"],
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Loads `path` (or the defaults) and applies `section.key=value`
    /// overrides; values are parsed as TOML, falling back to strings.
    pub fn load_with_overrides(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        let mut doc: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            let parts: Vec<&str> = key.trim().split('.').collect();
            let mut table = &mut doc;
            for part in &parts[..parts.len() - 1] {
                table = table
                    .entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("`{key}`: `{part}` is not a section")))?;
            }
            table.insert(parts[parts.len() - 1].to_string(), value);
        }
        let cfg: Config = doc.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.probe.validate()?;
        if self.ingest.stride == 0 {
            return Err(Error::Config("ingest.stride must be at least 1".into()));
        }
        if self.cluster.k_min < 2 || self.cluster.k_max < self.cluster.k_min {
            return Err(Error::Config(format!(
                "cluster range [{}, {}] must satisfy 2 <= k_min <= k_max",
                self.cluster.k_min, self.cluster.k_max
            )));
        }
        if self.encoder.hidden == 0 || self.encoder.embedding == 0 {
            return Err(Error::Config("encoder widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.encoder.gnn_dropout) {
            return Err(Error::Config("encoder.gnn_dropout must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.augment.p_select) || self.augment.sigma_pos < 0.0 || self.augment.sigma_speed < 0.0 {
            return Err(Error::Config("augment probabilities and spreads must be non-negative".into()));
        }
        if !(self.graph.gate_factor > 0.0 && self.graph.horizon > 0.0) {
            return Err(Error::Config("graph gate factor and horizon must be positive".into()));
        }
        for spec in self.synthetic.templates.values() {
            spec.validate()?;
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON of the
    /// sections feeding `stage`.
    pub fn hash(&self, stage: Stage) -> String {
        let full = serde_json::to_value(self).expect("config serializes");
        let mut subset = serde_json::Map::new();
        for &s in stage.sections() {
            subset.insert(s.to_string(), full[s].clone());
        }
        let digest = Sha256::digest(serde_json::Value::Object(subset).to_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Errors unless an upstream artifact's hash matches this config, or
    /// `force` is set.
    pub fn check(&self, stage: Stage, found: &str, what: &str, force: bool) -> Result<()> {
        let expected = self.hash(stage);
        if found == expected {
            return Ok(());
        }
        if force {
            log::warn!("{what}: config hash {found} differs from {expected}; continuing (--force)");
            return Ok(());
        }
        Err(Error::ConfigMismatch {
            expected,
            found: format!("{found} ({what})"),
        })
    }
}
