use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::{
    ModelSettings, TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_CYCLE_WEIGHT, DEFAULT_EPOCHS, DEFAULT_LATENT, DEFAULT_ORDER,
};
use crate::nmf::{DEFAULT_ITERATIONS, DEFAULT_PARTS, DEFAULT_RESTARTS, DEFAULT_SPARSITY};
use crate::optim::{DEFAULT_LEARNING_RATE, DEFAULT_LR_DECAY, DEFAULT_MOMENTUM};
use crate::sampling::{DEFAULT_FACTOR, DEFAULT_LEVELS};

/// Every tunable of a training run. Missing keys in a config file take the
/// defaults below.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainSection,
    pub model: ModelSection,
    pub hierarchy: HierarchySection,
    pub nmf: NmfSection,
    pub ablation: AblationSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub momentum: f64,
    pub cycle_weight: f64,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: DEFAULT_LEARNING_RATE,
            lr_decay: DEFAULT_LR_DECAY,
            momentum: DEFAULT_MOMENTUM,
            cycle_weight: DEFAULT_CYCLE_WEIGHT,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub latent: usize,
    pub order: usize,
    pub parts: usize,
    /// Encoder widths per level; empty means `[16, …, 16, 32]`.
    pub channels: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            latent: DEFAULT_LATENT,
            order: DEFAULT_ORDER,
            parts: DEFAULT_PARTS,
            channels: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierarchySection {
    pub levels: usize,
    pub factor: f64,
}

impl Default for HierarchySection {
    fn default() -> Self {
        Self {
            levels: DEFAULT_LEVELS,
            factor: DEFAULT_FACTOR,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmfSection {
    pub sparsity: f64,
    pub restarts: usize,
    pub iterations: usize,
}

impl Default for NmfSection {
    fn default() -> Self {
        Self {
            sparsity: DEFAULT_SPARSITY,
            restarts: DEFAULT_RESTARTS,
            iterations: DEFAULT_ITERATIONS,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub no_local_weights: bool,
    pub no_projection: bool,
}

impl RunConfig {
    /// Small-template settings: 32-dimensional latent, 100 epochs.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.model.latent = 32;
        c.train.epochs = 100;
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::Config(msg.into())) };
        check(self.train.epochs >= 1, "train.epochs must be positive")?;
        check(self.train.batch_size >= 1, "train.batch_size must be positive")?;
        check(self.model.latent >= 1, "model.latent must be positive")?;
        check(self.model.order >= 1, "model.order must be positive")?;
        check(self.model.parts >= 1, "model.parts must be positive")?;
        check(self.hierarchy.levels >= 1, "hierarchy.levels must be positive")?;
        check(self.hierarchy.factor > 1.0, "hierarchy.factor must exceed 1")?;
        check(self.nmf.sparsity >= 0.0, "nmf.sparsity must be non-negative")?;
        check(self.nmf.restarts >= 1, "nmf.restarts must be positive")?;
        check(self.nmf.iterations >= 1, "nmf.iterations must be positive")?;
        check(
            self.model.channels.is_empty() || self.model.channels.len() == self.hierarchy.levels,
            "model.channels needs one width per hierarchy level",
        )?;
        self.train_config().validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            lr_decay: t.lr_decay,
            momentum: t.momentum,
            cycle_weight: t.cycle_weight,
            seed: t.seed,
        }
    }

    pub fn model_settings(&self) -> Result<ModelSettings> {
        let m = &self.model;
        let mut s = ModelSettings::new(m.latent, m.order, m.parts, self.hierarchy.levels);
        if !m.channels.is_empty() {
            s.channels = m.channels.clone();
        }
        s.use_local_weights = !self.ablation.no_local_weights;
        s.use_projections = !self.ablation.no_projection;
        ensure!(
            s.channels.len() == self.hierarchy.levels,
            "channel count must match hierarchy levels"
        );
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_hyperparameters() {
        let c = RunConfig::default();
        assert_eq!(c.train.epochs, 300);
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.model.latent, 64);
        assert_eq!(c.model.order, 6);
        assert_eq!(c.model.parts, 4);
        assert_eq!(c.train.momentum, 0.9);
        assert_eq!(c.train.learning_rate, 0.0125);
        assert_eq!(c.train.lr_decay, 0.99);
        assert_eq!(c.nmf.sparsity, 7.5);
        assert_eq!(c.train.cycle_weight, 0.5);
        assert_eq!((c.hierarchy.levels, c.hierarchy.factor), (4, 4.0));
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = RunConfig::from_toml("[train]\nepochs = 7\n[ablation]\nno_projection = true\n").unwrap();
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.train.batch_size, 32);
        assert!(c.ablation.no_projection && !c.ablation.no_local_weights);
        assert!(!c.model_settings().unwrap().use_projections);
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::desk();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn shipped_desk_file_matches_desk_preset() {
        let text = include_str!("../../../../configs/desk.toml");
        assert_eq!(RunConfig::from_toml(text).unwrap(), RunConfig::desk());
    }

    #[test]
    fn invalid_values_and_unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[train]\nepochs = 0\n").is_err());
        assert!(RunConfig::from_toml("[train]\nepoch = 3\n").is_err());
        assert!(RunConfig::from_toml("[hierarchy]\nfactor = 1.0\n").is_err());
        assert!(RunConfig::from_toml("[model]\nchannels = [8, 8]\n").is_err());
    }
}
