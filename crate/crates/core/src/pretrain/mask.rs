use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AomError, Result};
use crate::registry::Registry;
use crate::seed;

/// Chooses which rows of one scale's sequence stay visible.
pub trait MaskStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    /// Visibility flags for `n` rows laid out as `channels` equal blocks.
    fn sample(&self, n: usize, channels: usize, ratio: f64, rng: &mut ChaCha8Rng) -> Result<Vec<bool>>;
}

/// Uniform token subset; `round(N (1 - m))` visible.
#[derive(Debug, Default, Clone, Copy)]
pub struct TokenMasking;

impl MaskStrategy for TokenMasking {
    fn name(&self) -> &'static str {
        "token"
    }

    fn sample(&self, n: usize, _channels: usize, ratio: f64, rng: &mut ChaCha8Rng) -> Result<Vec<bool>> {
        let keep = visible_count(n, ratio);
        let mut visible = vec![false; n];
        for i in sample(rng, n, keep).into_iter() {
            visible[i] = true;
        }
        Ok(visible)
    }
}

/// Whole channel blocks; `ceil(C m)` channels masked.
#[derive(Debug, Default, Clone, Copy)]
pub struct ChannelMasking;

impl MaskStrategy for ChannelMasking {
    fn name(&self) -> &'static str {
        "channel"
    }

    fn sample(&self, n: usize, channels: usize, ratio: f64, rng: &mut ChaCha8Rng) -> Result<Vec<bool>> {
        if channels == 0 || !n.is_multiple_of(channels) {
            return Err(AomError::shape(format!(
                "{n} tokens do not split into {channels} channel blocks"
            )));
        }
        let masked = masked_channel_count(channels, ratio);
        if masked == channels {
            return Err(AomError::invalid(format!(
                "mask ratio {ratio} would hide all {channels} channels"
            )));
        }
        let per = n / channels;
        let mut visible = vec![true; n];
        for c in sample(rng, channels, masked).into_iter() {
            visible[c * per..(c + 1) * per].iter_mut().for_each(|v| *v = false);
        }
        Ok(visible)
    }
}

pub fn mask_strategies() -> Registry<dyn MaskStrategy> {
    let mut r: Registry<dyn MaskStrategy> = Registry::new("mask mode");
    r.register("token", || Box::new(TokenMasking));
    r.register("channel", || Box::new(ChannelMasking));
    r
}

pub fn visible_count(n: usize, ratio: f64) -> usize {
    ((n as f64) * (1.0 - ratio)).round() as usize
}

pub fn masked_channel_count(channels: usize, ratio: f64) -> usize {
    ((channels as f64) * ratio - 1e-9).ceil().max(0.0) as usize
}

/// Visibility of one scale's sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleMask {
    pub visible: Vec<bool>,
    pub mode: String,
    pub seed: u64,
}

impl ScaleMask {
    pub fn all_visible(n: usize) -> Self {
        Self {
            visible: vec![true; n],
            mode: "none".into(),
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.visible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visible.is_empty()
    }

    pub fn visible_idx(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.visible[i]).collect()
    }

    pub fn masked_idx(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.visible[i]).collect()
    }

    pub fn num_visible(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }
}

/// Per-scale masks for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub ratio: f64,
    pub mode: String,
    pub scales: Vec<ScaleMask>,
}

pub fn check_ratio(ratio: f64) -> Result<()> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(AomError::invalid(format!("mask ratio {ratio} outside [0, 1)")));
    }
    Ok(())
}

/// Deterministic per seed.
pub fn sample_mask(n: usize, channels: usize, ratio: f64, mode: &str, seed: u64) -> Result<ScaleMask> {
    check_ratio(ratio)?;
    let strategy = mask_strategies().create(mode)?;
    let mut rng = seed::rng(seed, &[0x3a5c]);
    let visible = strategy.sample(n, channels, ratio, &mut rng)?;
    Ok(ScaleMask {
        visible,
        mode: mode.to_string(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn desk_token_count() {
        let m = sample_mask(208, 13, 0.75, "token", 0).unwrap();
        assert_eq!(m.num_visible(), 52);
        assert_eq!(m.visible_idx().len() + m.masked_idx().len(), 208);
    }

    #[test]
    fn zero_ratio_keeps_everything() {
        let m = sample_mask(50, 2, 0.0, "token", 1).unwrap();
        assert!(m.masked_idx().is_empty());
    }

    #[test]
    fn channel_mode_masks_whole_blocks() {
        let m = sample_mask(208, 13, 0.75, "channel", 2).unwrap();
        let blocks: Vec<bool> = (0..13).map(|c| m.visible[c * 16]).collect();
        assert_eq!(blocks.iter().filter(|&&v| !v).count(), 10);
        for c in 0..13 {
            assert!(m.visible[c * 16..(c + 1) * 16].iter().all(|&v| v == blocks[c]));
        }
    }

    #[test]
    fn channel_mode_cannot_hide_everything() {
        assert!(sample_mask(16, 1, 0.5, "channel", 0).is_err());
        assert!(sample_mask(10, 3, 0.5, "channel", 0).is_err());
    }

    #[test]
    fn bad_ratio_and_mode() {
        assert!(sample_mask(10, 1, 1.0, "token", 0).is_err());
        assert!(sample_mask(10, 1, -0.1, "token", 0).is_err());
        assert!(sample_mask(10, 1, 0.5, "patch", 0).is_err());
    }

    #[test]
    fn seeded() {
        let a = sample_mask(100, 4, 0.6, "token", 9).unwrap();
        assert_eq!(a, sample_mask(100, 4, 0.6, "token", 9).unwrap());
        assert_ne!(a, sample_mask(100, 4, 0.6, "token", 10).unwrap());
    }

    proptest! {
        #[test]
        fn token_accounting(n in 1usize..600, ratio in 0.0f64..0.99, seed in any::<u64>()) {
            let m = sample_mask(n, 1, ratio, "token", seed).unwrap();
            prop_assert_eq!(m.num_visible(), ((n as f64) * (1.0 - ratio)).round() as usize);
            prop_assert_eq!(m.len(), n);
        }
    }
}
