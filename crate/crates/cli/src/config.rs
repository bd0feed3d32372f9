//! TOML run configuration. Every section is optional; unknown keys are errors.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;
use zonofair::embed::ContrastiveConfig;
use zonofair::lm::{Hyperparams, TrainConfig};
use zonofair::verify::SearchConfig;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub pretrain: PretrainSection,
    pub model: ModelOverrides,
    pub train: TrainConfig,
    pub search: SearchConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainSection {
    pub dim: usize,
    pub cluster: PhaseOverrides,
    pub general: PhaseOverrides,
}

impl Default for PretrainSection {
    fn default() -> Self {
        Self {
            dim: 8,
            cluster: PhaseOverrides::default(),
            general: PhaseOverrides::default(),
        }
    }
}

/// Fields left out keep the phase default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseOverrides {
    pub alpha: Option<f64>,
    pub margin: Option<f64>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
}

impl PhaseOverrides {
    pub fn apply(&self, mut base: ContrastiveConfig, seed: u64) -> ContrastiveConfig {
        if let Some(v) = self.alpha {
            base.alpha = v;
        }
        if let Some(v) = self.margin {
            base.margin = v;
        }
        if let Some(v) = self.epochs {
            base.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            base.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            base.batch_size = v;
        }
        base.seed = seed;
        base
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    pub heads: Option<usize>,
    pub ff_dim: Option<usize>,
    pub blocks: Option<usize>,
    pub max_seq: Option<usize>,
    pub dropout: Option<f64>,
}

impl ModelOverrides {
    /// `dim` always comes from the embedding table.
    pub fn apply(&self, dim: usize) -> Hyperparams {
        let d = Hyperparams::default();
        Hyperparams {
            dim,
            heads: self.heads.unwrap_or(d.heads),
            ff_dim: self.ff_dim.unwrap_or(d.ff_dim),
            blocks: self.blocks.unwrap_or(d.blocks),
            max_seq: self.max_seq.unwrap_or(d.max_seq),
            dropout: self.dropout.unwrap_or(d.dropout),
            ..d
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg: RunConfig = toml::from_str(
            "[pretrain.general]\nmargin = 0.6\n[model]\nblocks = 1\n[train]\nepochs = 3\n",
        )
        .unwrap();
        let general = cfg.pretrain.general.apply(ContrastiveConfig::general_phase(0.5), 9);
        assert_eq!((general.alpha, general.margin, general.seed), (1.0, 0.6, 9));
        assert_eq!(cfg.model.apply(8).blocks, 1);
        assert_eq!(cfg.model.apply(8).heads, 2);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.learning_rate, 1e-3);
        assert_eq!(cfg.search, SearchConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("[train]\nepoch = 3\n").is_err());
        assert!(toml::from_str::<RunConfig>("[verify]\n").is_err());
        assert!(toml::from_str::<RunConfig>("[pretrain.cluster]\nseed = 1\n").is_err());
    }

    #[test]
    fn documented_example_parses() {
        let doc = include_str!("../../../docs/formats.md");
        let start = doc.find("```toml\n").unwrap() + 8;
        let len = doc[start..].find("```").unwrap();
        let cfg: RunConfig = toml::from_str(&doc[start..start + len]).unwrap();
        assert_eq!(cfg.pretrain.cluster.alpha, Some(1000.0));
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.search, SearchConfig::default());
    }
}
