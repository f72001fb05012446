use std::fs;
use std::path::{Path, PathBuf};

use hoitg_core::{LossWeights, ModelConfig};
use hoitg_diffcore::{AdamHyper, Exec};
use hoitg_scenegen::TemplateId;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    /// Fraction of the epochs after which the rate is multiplied by `lr_decay`.
    pub decay_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub model: ModelConfig,
    pub weights: LossWeights,
    /// Templates the dataset must contain; `None` accepts any.
    pub templates: Option<Vec<TemplateId>>,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            steps_per_epoch: 64,
            batch_size: 4,
            learning_rate: 1e-4,
            lr_decay: 0.1,
            decay_fraction: 0.6,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            model: ModelConfig::default(),
            weights: LossWeights::default(),
            templates: None,
            dataset: None,
            checkpoint: None,
            exec: Exec::default(),
        }
    }
}

impl TrainConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: TrainConfig =
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.steps_per_epoch == 0 || self.batch_size == 0 {
            return Err(HarnessError::Config("epochs, steps_per_epoch and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(HarnessError::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.decay_fraction > 0.0 && self.decay_fraction < 1.0) {
            return Err(HarnessError::Config(format!("decay_fraction {} must lie in (0, 1)", self.decay_fraction)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return Err(HarnessError::Config(format!("lr_decay {} must be positive", self.lr_decay)));
        }
        self.model.validate()?;
        self.weights.validate()?;
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }

    /// First epoch trained at the decayed rate.
    pub fn decay_epoch(&self) -> usize {
        (self.decay_fraction * self.epochs as f64).round() as usize
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if epoch >= self.decay_epoch() {
            self.learning_rate * self.lr_decay
        } else {
            self.learning_rate
        }
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}
