use serde::{Deserialize, Serialize};

use crate::error::{AomError, Result};
use crate::mape::kernel_resizers;
use crate::sitok::spectral_encodings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub depth: usize,
    pub embed_dim: usize,
    pub num_heads: usize,
    pub mlp_ratio: f64,
    pub layernorm_eps: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            embed_dim: 64,
            num_heads: 4,
            mlp_ratio: 4.0,
            layernorm_eps: 1e-6,
        }
    }
}

impl EncoderConfig {
    pub fn mlp_hidden(&self) -> usize {
        (self.embed_dim as f64 * self.mlp_ratio).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.embed_dim;
        if d == 0 || !d.is_multiple_of(4) {
            return Err(AomError::invalid(format!(
                "embed_dim {d} must be a positive multiple of 4"
            )));
        }
        if self.num_heads == 0 || !d.is_multiple_of(self.num_heads) {
            return Err(AomError::invalid(format!(
                "embed_dim {d} not divisible by num_heads {}",
                self.num_heads
            )));
        }
        if !(self.mlp_ratio > 0.0) || self.mlp_hidden() == 0 {
            return Err(AomError::invalid("mlp_ratio must be positive"));
        }
        if !(self.layernorm_eps > 0.0) {
            return Err(AomError::invalid("layernorm_eps must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub depth: usize,
    pub decoder_dim: usize,
    pub num_heads: usize,
    pub mlp_ratio: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            decoder_dim: 32,
            num_heads: 4,
            mlp_ratio: 4.0,
        }
    }
}

impl DecoderConfig {
    pub fn mlp_hidden(&self) -> usize {
        (self.decoder_dim as f64 * self.mlp_ratio).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if self.decoder_dim == 0 || self.num_heads == 0 || !self.decoder_dim.is_multiple_of(self.num_heads) {
            return Err(AomError::invalid(format!(
                "decoder_dim {} must be a positive multiple of num_heads {}",
                self.decoder_dim, self.num_heads
            )));
        }
        if !(self.mlp_ratio > 0.0) || self.mlp_hidden() == 0 {
            return Err(AomError::invalid("decoder mlp_ratio must be positive"));
        }
        Ok(())
    }
}

fn default_head_dim() -> usize {
    128
}
fn default_init_std() -> f64 {
    0.02
}
fn default_encoding() -> String {
    "index".into()
}
fn default_resizer() -> String {
    "pi".into()
}
fn default_sensor() -> String {
    "sentinel2".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub decoder: DecoderConfig,
    /// Projection-head output width, shared by every scale.
    #[serde(default = "default_head_dim")]
    pub head_dim: usize,
    /// Native kernel sizes, strictly increasing.
    pub bank_sizes: Vec<usize>,
    /// Target patch size of each scale; one decoder and head per entry.
    pub scales: Vec<usize>,
    #[serde(default = "default_encoding")]
    pub channel_encoding: String,
    #[serde(default = "default_resizer")]
    pub resizer: String,
    #[serde(default = "default_sensor")]
    pub sensor_id: String,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            decoder: DecoderConfig::default(),
            head_dim: default_head_dim(),
            bank_sizes: vec![4, 8],
            scales: vec![4, 6, 8],
            channel_encoding: default_encoding(),
            resizer: default_resizer(),
            sensor_id: default_sensor(),
            init_std: default_init_std(),
        }
    }
}

impl ModelConfig {
    pub fn embed_dim(&self) -> usize {
        self.encoder.embed_dim
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        if self.head_dim == 0 {
            return Err(AomError::invalid("head_dim must be positive"));
        }
        if self.bank_sizes.is_empty() || self.bank_sizes.contains(&0) {
            return Err(AomError::invalid("bank_sizes must be non-empty and positive"));
        }
        if self.bank_sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AomError::invalid(format!(
                "bank_sizes {:?} must be strictly increasing",
                self.bank_sizes
            )));
        }
        if self.scales.is_empty() || self.scales.contains(&0) {
            return Err(AomError::invalid("scales must be non-empty and positive"));
        }
        spectral_encodings().create(&self.channel_encoding)?;
        kernel_resizers().create(&self.resizer)?;
        if !(self.init_std > 0.0) {
            return Err(AomError::invalid("init_std must be positive"));
        }
        Ok(())
    }

    pub fn scale_index(&self, patch_size: usize) -> Option<usize> {
        self.scales.iter().position(|&p| p == patch_size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        ModelConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_heads_and_names() {
        let mut c = ModelConfig::default();
        c.encoder.num_heads = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.resizer = "nearest".into();
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("bilinear") && e.contains("pi"), "{e}");
        let mut c = ModelConfig::default();
        c.bank_sizes = vec![8, 4];
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_defaults_fill_optional_fields() {
        let j = r#"{"encoder":{"depth":1,"embed_dim":8,"num_heads":2,"mlp_ratio":2.0,"layernorm_eps":1e-6},
                   "bank_sizes":[4],"scales":[4]}"#;
        let c: ModelConfig = serde_json::from_str(j).unwrap();
        assert_eq!(c.head_dim, 128);
        assert_eq!(c.channel_encoding, "index");
        c.validate().unwrap();
    }
}
