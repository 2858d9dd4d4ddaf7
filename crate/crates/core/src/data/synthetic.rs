//! Labeled synthetic multispectral scenes.
//!
//! A scene of class `k` is the class spectrum broadcast over the image, plus a
//! smooth texture field shared by all bands (with a fixed per-band gain), plus
//! white noise. Class spectra are built from a few smooth spectral basis
//! functions, so information is redundant across bands: a probe on a band
//! subset still sees most of the class signal.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{AomError, Result};
use crate::seed;

use super::profile::SensorProfile;
use super::stack::BandStack;

fn default_sensor() -> String {
    "sentinel2".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDatasetConfig {
    #[serde(default = "default_sensor")]
    pub sensor_id: String,
    pub num_classes: usize,
    /// `num_classes x band_count` mean reflectance, in profile band order.
    pub class_signatures: Vec<Vec<f64>>,
    /// Gaussian correlation length of the texture field, in pixels.
    pub texture_scale: f64,
    #[serde(default)]
    pub texture_amplitude: f64,
    pub noise_sigma: f64,
    pub image_size: usize,
    pub seed: u64,
    /// Per-band standardization with the statistics from [`SyntheticDatasetConfig::channel_stats`].
    #[serde(default)]
    pub standardize: bool,
}

impl SyntheticDatasetConfig {
    /// Default desk-scale task: four classes on the Sentinel-2 profile.
    pub fn desk_default() -> Self {
        Self::generated(&SensorProfile::sentinel2(), 4, 24, 0)
    }

    /// Builds class spectra from smooth bumps over log-wavelength.
    pub fn generated(profile: &SensorProfile, num_classes: usize, image_size: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed, &[0x5167]);
        let centers = [520.0f64, 760.0, 1000.0, 1650.0];
        let width = 0.28;
        let class_signatures = (0..num_classes)
            .map(|_| {
                let coef: Vec<f64> = centers.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
                let level: f64 = rng.gen_range(0.2..0.35);
                profile
                    .central_wavelengths_nm
                    .iter()
                    .map(|&lambda| {
                        let bumps: f64 = centers
                            .iter()
                            .zip(&coef)
                            .map(|(&c, &a)| {
                                let z = (lambda / c).ln() / width;
                                a * (-0.5 * z * z).exp()
                            })
                            .sum();
                        let own: f64 = rng.gen_range(-1.0..1.0);
                        level + 0.06 * bumps + 0.01 * own
                    })
                    .collect()
            })
            .collect();
        Self {
            sensor_id: profile.sensor_id.clone(),
            num_classes,
            class_signatures,
            texture_scale: 2.5,
            texture_amplitude: 0.08,
            noise_sigma: 0.03,
            image_size,
            seed,
            standardize: false,
        }
    }

    pub fn profile(&self) -> Result<Arc<SensorProfile>> {
        SensorProfile::builtin(&self.sensor_id)
    }

    pub fn validate(&self) -> Result<()> {
        let profile = self.profile()?;
        if self.num_classes < 2 {
            return Err(AomError::invalid("num_classes must be at least 2"));
        }
        if self.class_signatures.len() != self.num_classes {
            return Err(AomError::invalid(format!(
                "class_signatures has {} rows, expected {}",
                self.class_signatures.len(),
                self.num_classes
            )));
        }
        for (k, row) in self.class_signatures.iter().enumerate() {
            if row.len() != profile.band_count {
                return Err(AomError::invalid(format!(
                    "class {k} signature has {} bands, profile has {}",
                    row.len(),
                    profile.band_count
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(AomError::invalid(format!("class {k} signature is not finite")));
            }
            if self.class_signatures[..k].contains(row) {
                return Err(AomError::invalid(format!("class {k} duplicates an earlier signature")));
            }
        }
        if !(self.texture_scale > 0.0) || self.noise_sigma < 0.0 || self.texture_amplitude < 0.0 {
            return Err(AomError::invalid(
                "texture_scale must be positive; noise_sigma and texture_amplitude non-negative",
            ));
        }
        if self.image_size == 0 {
            return Err(AomError::invalid("image_size must be positive"));
        }
        Ok(())
    }

    fn band_gains(&self, bands: usize) -> Vec<f64> {
        let mut rng = seed::rng(self.seed, &[0x6a1e]);
        (0..bands).map(|_| rng.gen_range(0.5..1.5)).collect()
    }

    /// Per-band mean and standard deviation of the raw generator output,
    /// averaged over classes (closed form).
    pub fn channel_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let bands = self.class_signatures.first().map_or(0, Vec::len);
        let gains = self.band_gains(bands);
        let k = self.num_classes as f64;
        (0..bands)
            .map(|b| {
                let mean = self.class_signatures.iter().map(|r| r[b]).sum::<f64>() / k;
                let between = self.class_signatures.iter().map(|r| (r[b] - mean).powi(2)).sum::<f64>() / k;
                let tex = (self.texture_amplitude * gains[b]).powi(2);
                let var = between + tex + self.noise_sigma.powi(2);
                (mean, var.sqrt().max(1e-6))
            })
            .unzip()
    }
}

/// Generates one scene; a pure function of `(config, class_id, seed)`.
pub fn generate_synthetic_scene(
    config: &SyntheticDatasetConfig,
    class_id: usize,
    seed: u64,
) -> Result<(BandStack, usize)> {
    if class_id >= config.num_classes {
        return Err(AomError::invalid(format!(
            "class_id {class_id} out of range for {} classes",
            config.num_classes
        )));
    }
    config.validate()?;
    let profile = config.profile()?;
    let n = config.image_size;
    let bands = profile.band_count;
    let mut rng = seed::rng(config.seed, &[seed, class_id as u64]);

    let field = if config.texture_amplitude > 0.0 {
        smooth_field(n, config.texture_scale, &mut rng)
    } else {
        vec![0.0; n * n]
    };
    let gains = config.band_gains(bands);
    let (means, stds) = config.channel_stats();
    let signature = &config.class_signatures[class_id];

    let mut pixels = Vec::with_capacity(bands * n * n);
    for b in 0..bands {
        let tex = config.texture_amplitude * gains[b];
        for &f in &field {
            let noise: f64 = if config.noise_sigma > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                config.noise_sigma * z
            } else {
                0.0
            };
            let mut v = signature[b] + tex * f + noise;
            if config.standardize {
                v = (v - means[b]) / stds[b];
            }
            pixels.push(v as f32);
        }
    }
    let resolution = profile.nominal_gsd_m.iter().cloned().fold(f64::INFINITY, f64::min);
    let stack = BandStack::new(
        profile.clone(),
        profile.channel_indices.clone(),
        n,
        n,
        pixels,
        resolution,
    )?;
    Ok((stack, class_id))
}

/// Which disjoint stream of scenes to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Pretrain,
    ProbeTrain,
    ProbeTest,
}

impl Split {
    fn tag(self) -> u64 {
        match self {
            Split::Pretrain => 0x9e7,
            Split::ProbeTrain => 0x7a1,
            Split::ProbeTest => 0x7e5,
        }
    }
}

/// `count` class-balanced scenes (class `i mod K` for scene `i`).
pub fn generate_split(
    config: &SyntheticDatasetConfig,
    split: Split,
    count: usize,
    split_seed: u64,
) -> Result<Vec<(BandStack, usize)>> {
    config.validate()?;
    (0..count)
        .map(|i| {
            let s = seed::derive(split_seed, &[split.tag(), i as u64]);
            generate_synthetic_scene(config, i % config.num_classes, s)
        })
        .collect()
}

/// White noise blurred by a separable Gaussian (reflected borders), scaled to
/// unit marginal variance.
fn smooth_field(n: usize, sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let norm: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.iter().map(|t| t / norm).collect();
    let gain: f64 = taps.iter().map(|t| t * t).sum::<f64>();
    let white: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(&mut *rng)).collect();
    let reflect = |i: isize| -> usize {
        let m = n as isize;
        let mut j = i;
        while j < 0 || j >= m {
            j = if j < 0 { -j - 1 } else { 2 * m - j - 1 };
        }
        j as usize
    };
    let mut tmp = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            tmp[y * n + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * white[y * n + reflect(x as isize + k as isize - radius)])
                .sum();
        }
    }
    let mut out = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            out[y * n + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * tmp[reflect(y as isize + k as isize - radius) * n + x])
                .sum::<f64>()
                / gain;
        }
    }
    out
}
