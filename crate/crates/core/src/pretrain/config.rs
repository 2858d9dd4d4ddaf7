use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SyntheticDatasetConfig;
use crate::error::{AomError, Result};
use crate::net::ModelConfig;

use super::loss::LossWeights;
use super::mask::{check_ratio, mask_strategies};
use super::schedule::scale_schedules;

fn default_patch_sizes() -> Vec<usize> {
    vec![4, 6, 8]
}
fn default_steps() -> u64 {
    300
}
fn default_batch() -> usize {
    16
}
fn default_lr() -> f64 {
    1e-3
}
fn default_min_lr() -> f64 {
    1e-5
}
fn default_warmup() -> u64 {
    20
}
fn default_wd() -> f64 {
    0.05
}
fn default_betas() -> (f64, f64) {
    (0.9, 0.95)
}
fn default_mask_ratio() -> f64 {
    0.75
}
fn default_mask_mode() -> String {
    "channel".into()
}
fn default_schedule() -> String {
    "all".into()
}
fn default_dataset_size() -> usize {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "SyntheticDatasetConfig::desk_default")]
    pub data: SyntheticDatasetConfig,
    /// Target patch sizes, one scale each; overrides `model.scales`.
    #[serde(default = "default_patch_sizes")]
    pub patch_size_set: Vec<usize>,
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_min_lr")]
    pub min_learning_rate: f64,
    #[serde(default = "default_warmup")]
    pub warmup_steps: u64,
    #[serde(default = "default_wd")]
    pub weight_decay: f64,
    #[serde(default = "default_betas")]
    pub betas: (f64, f64),
    #[serde(default = "default_mask_ratio")]
    pub mask_ratio: f64,
    #[serde(default = "default_mask_mode")]
    pub mask_mode: String,
    /// `all` scales every step, or `cycle` one scale per step.
    #[serde(default = "default_schedule")]
    pub scale_schedule: String,
    #[serde(default)]
    pub loss: LossWeights,
    /// Normalise each target patch to zero mean and unit variance.
    #[serde(default)]
    pub norm_pix_targets: bool,
    /// Size of the pretraining scene pool.
    #[serde(default = "default_dataset_size")]
    pub dataset_size: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| AomError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Model config with `scales` taken from `patch_size_set`.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            scales: self.patch_size_set.clone(),
            ..self.model.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.data.validate()?;
        self.loss.validate()?;
        check_ratio(self.mask_ratio)?;
        mask_strategies().create(&self.mask_mode)?;
        scale_schedules().create(&self.scale_schedule)?;
        let size = self.data.image_size;
        if let Some(&p) = self.patch_size_set.iter().find(|&&p| p == 0 || !size.is_multiple_of(p)) {
            return Err(AomError::NotDivisible { h: size, w: size, p });
        }
        if self.model.sensor_id != self.data.sensor_id {
            return Err(AomError::invalid(format!(
                "model sensor {} differs from data sensor {}",
                self.model.sensor_id, self.data.sensor_id
            )));
        }
        if self.batch_size == 0 || self.dataset_size < self.batch_size {
            return Err(AomError::invalid(format!(
                "batch_size {} must be in 1..=dataset_size {}",
                self.batch_size, self.dataset_size
            )));
        }
        if !(self.learning_rate > 0.0) || self.min_learning_rate < 0.0 || self.min_learning_rate > self.learning_rate {
            return Err(AomError::invalid(
                "need 0 <= min_learning_rate <= learning_rate, learning_rate > 0",
            ));
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) || self.weight_decay < 0.0 {
            return Err(AomError::invalid(
                "betas must lie in [0, 1) and weight_decay be non-negative",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_desk_scale() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!(c.patch_size_set, vec![4, 6, 8]);
        assert_eq!(c.data.image_size, 24);
        assert_eq!(c.model_config().scales, vec![4, 6, 8]);
        assert_eq!(c.loss.lambda_recon, 0.2);
    }

    #[test]
    fn indivisible_patch_size_rejected() {
        let c = TrainConfig::from_json(r#"{"patch_size_set": [4, 5]}"#);
        assert!(matches!(c, Err(AomError::NotDivisible { p: 5, .. })));
    }

    #[test]
    fn unknown_modes_rejected() {
        assert!(TrainConfig::from_json(r#"{"mask_mode": "pixel"}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"scale_schedule": "random"}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"mask_ratio": 1.0}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = TrainConfig::default();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(TrainConfig::from_json(&s).unwrap(), c);
    }
}
