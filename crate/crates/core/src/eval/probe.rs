//! Frozen-backbone linear probing on pooled encoder features.

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::data::{generate_split, BandStack, Split, SyntheticDatasetConfig};
use crate::error::{AomError, Result};
use crate::net::AomModel;

use super::logistic::{FitOptions, LogisticRegression};

fn default_train() -> usize {
    512
}

fn default_test() -> usize {
    256
}

fn default_l2() -> f64 {
    1e-4
}

fn default_tol() -> f64 {
    1e-6
}

fn default_max_iter() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    #[serde(default = "SyntheticDatasetConfig::desk_default")]
    pub data: SyntheticDatasetConfig,
    #[serde(default = "default_train")]
    pub train_size: usize,
    #[serde(default = "default_test")]
    pub test_size: usize,
    #[serde(default = "default_l2")]
    pub l2: f64,
    /// Max-abs gradient tolerance of the classifier fit.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self::with_data(SyntheticDatasetConfig::desk_default())
    }
}

impl ProbeConfig {
    pub fn with_data(data: SyntheticDatasetConfig) -> Self {
        Self {
            data,
            train_size: default_train(),
            test_size: default_test(),
            l2: default_l2(),
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            l2: self.l2,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        if self.train_size < self.data.num_classes || self.test_size == 0 {
            return Err(AomError::invalid(format!(
                "probe needs at least one train scene per class and a non-empty test split (got {} / {})",
                self.train_size, self.test_size
            )));
        }
        if !(self.l2 >= 0.0 && self.tol > 0.0) {
            return Err(AomError::invalid("probe l2 must be >= 0 and tol > 0"));
        }
        Ok(())
    }

    pub fn dataset_id(&self) -> String {
        format!(
            "synthetic-{}-k{}-{}px-seed{}",
            self.data.sensor_id, self.data.num_classes, self.data.image_size, self.data.seed
        )
    }
}

/// Disjoint labelled train and test scenes for one probe seed.
#[derive(Debug, Clone)]
pub struct ProbeData {
    pub dataset_id: String,
    pub num_classes: usize,
    pub seed: u64,
    pub train: Vec<(BandStack, usize)>,
    pub test: Vec<(BandStack, usize)>,
}

impl ProbeData {
    pub fn generate(config: &ProbeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            dataset_id: config.dataset_id(),
            num_classes: config.data.num_classes,
            seed,
            train: generate_split(&config.data, Split::ProbeTrain, config.train_size, seed)?,
            test: generate_split(&config.data, Split::ProbeTest, config.test_size, seed)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub dataset_id: String,
    pub band_subset: Vec<usize>,
    pub patch_size: usize,
    pub accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub class_counts: Vec<usize>,
    pub train_accuracy: f64,
    pub seed: u64,
    pub checkpoint_id: String,
}

/// Pooled, pre-projection encoder features of `stack` at `patch_size`.
pub fn extract_representation<T: Real>(model: &AomModel<T>, stack: &BandStack, patch_size: usize) -> Result<Vec<f64>> {
    let v: Vec<f64> = model
        .representation(stack, patch_size)?
        .into_iter()
        .map(Real::as_f64)
        .collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(AomError::Numerical("non-finite representation".into()));
    }
    Ok(v)
}

pub fn extract_features<T: Real>(
    model: &AomModel<T>,
    stacks: &[(BandStack, usize)],
    bands: Option<&[usize]>,
    patch_size: usize,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut xs = Vec::with_capacity(stacks.len());
    let mut ys = Vec::with_capacity(stacks.len());
    for (stack, label) in stacks {
        let x = match bands {
            Some(b) => extract_representation(model, &stack.select_bands(b)?, patch_size)?,
            None => extract_representation(model, stack, patch_size)?,
        };
        xs.push(x);
        ys.push(*label);
    }
    Ok((xs, ys))
}

/// Test accuracy, per-class test accuracy and class counts, train accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierScore {
    pub accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub class_counts: Vec<usize>,
    pub train_accuracy: f64,
}

fn accuracy(pred: &[usize], y: &[usize]) -> f64 {
    pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
}

pub fn fit_and_score(
    train: (&[Vec<f64>], &[usize]),
    test: (&[Vec<f64>], &[usize]),
    num_classes: usize,
    opts: FitOptions,
) -> Result<ClassifierScore> {
    let clf = LogisticRegression::fit(train.0, train.1, num_classes, opts)?;
    let pred = clf.predict(test.0);
    let mut hits = vec![0usize; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (&p, &y) in pred.iter().zip(test.1) {
        counts[y] += 1;
        hits[y] += (p == y) as usize;
    }
    let per_class = hits
        .iter()
        .zip(&counts)
        .map(|(&h, &n)| if n == 0 { 0.0 } else { h as f64 / n as f64 })
        .collect();
    Ok(ClassifierScore {
        accuracy: accuracy(&pred, test.1),
        per_class_accuracy: per_class,
        class_counts: counts,
        train_accuracy: accuracy(&clf.predict(train.0), train.1),
    })
}

/// Probe on pre-generated splits. `bands = None` keeps every band.
pub fn linear_probe_on<T: Real>(
    model: &AomModel<T>,
    checkpoint_id: &str,
    data: &ProbeData,
    bands: Option<&[usize]>,
    patch_size: usize,
    opts: FitOptions,
) -> Result<ProbeResult> {
    let before = model.params().fingerprint();
    let (xtr, ytr) = extract_features(model, &data.train, bands, patch_size)?;
    let (xte, yte) = extract_features(model, &data.test, bands, patch_size)?;
    let score = fit_and_score((&xtr, &ytr), (&xte, &yte), data.num_classes, opts)?;
    if model.params().fingerprint() != before {
        return Err(AomError::invalid("backbone parameters changed during probing"));
    }
    let band_subset = match bands {
        Some(b) => b.to_vec(),
        None => data
            .train
            .first()
            .map(|(s, _)| s.channel_indices().to_vec())
            .unwrap_or_default(),
    };
    Ok(ProbeResult {
        dataset_id: data.dataset_id.clone(),
        band_subset,
        patch_size,
        accuracy: score.accuracy,
        per_class_accuracy: score.per_class_accuracy,
        class_counts: score.class_counts,
        train_accuracy: score.train_accuracy,
        seed: data.seed,
        checkpoint_id: checkpoint_id.to_string(),
    })
}

pub fn linear_probe<T: Real>(
    model: &AomModel<T>,
    checkpoint_id: &str,
    config: &ProbeConfig,
    bands: Option<&[usize]>,
    patch_size: usize,
    seed: u64,
) -> Result<ProbeResult> {
    let data = ProbeData::generate(config, seed)?;
    linear_probe_on(model, checkpoint_id, &data, bands, patch_size, config.fit_options())
}

/// Short identifier of a set of weights.
pub fn checkpoint_id<T: Real>(model: &AomModel<T>) -> String {
    format!("{:016x}", model.params().fingerprint())
}

#[cfg(test)]
mod tests {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::data::SensorProfile;
    use crate::net::{DecoderConfig, EncoderConfig, ModelConfig};

    fn tiny_model() -> AomModel<f32> {
        let config = ModelConfig {
            encoder: EncoderConfig {
                depth: 1,
                embed_dim: 16,
                num_heads: 2,
                ..EncoderConfig::default()
            },
            decoder: DecoderConfig {
                depth: 1,
                decoder_dim: 8,
                num_heads: 2,
                ..DecoderConfig::default()
            },
            head_dim: 8,
            ..ModelConfig::default()
        };
        AomModel::new(config, 3).unwrap()
    }

    fn small_config() -> ProbeConfig {
        ProbeConfig {
            train_size: 48,
            test_size: 24,
            ..ProbeConfig::with_data(SyntheticDatasetConfig::generated(&SensorProfile::sentinel2(), 4, 8, 0))
        }
    }

    #[test]
    fn representation_is_deterministic_and_sized() {
        let m = tiny_model();
        let data = ProbeData::generate(&small_config(), 0).unwrap();
        let s = &data.train[0].0;
        let a = extract_representation(&m, s, 4).unwrap();
        assert_eq!(a, extract_representation(&m, s, 4).unwrap());
        assert_eq!(a.len(), 16);
        assert_eq!(extract_representation(&m, s, 8).unwrap().len(), 16);
        let rgb = extract_representation(&m, &s.select_bands(&[3, 2, 1]).unwrap(), 4).unwrap();
        assert!(rgb.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn probe_result_is_consistent() {
        let m = tiny_model();
        let cfg = small_config();
        let r = linear_probe(&m, &checkpoint_id(&m), &cfg, Some(&[1, 2, 3, 7]), 4, 5).unwrap();
        assert_eq!(r.band_subset, vec![1, 2, 3, 7]);
        let n: usize = r.class_counts.iter().sum();
        let weighted: f64 = r
            .per_class_accuracy
            .iter()
            .zip(&r.class_counts)
            .map(|(a, &c)| a * c as f64)
            .sum::<f64>()
            / n as f64;
        assert!((weighted - r.accuracy).abs() < 1e-12);
        assert_eq!(
            r,
            linear_probe(&m, &checkpoint_id(&m), &cfg, Some(&[1, 2, 3, 7]), 4, 5).unwrap()
        );
    }

    #[test]
    fn permuted_labels_give_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let k = 4;
        let x: Vec<Vec<f64>> = (0..800).map(|i| vec![(i % k) as f64, ((i * 7) % 13) as f64]).collect();
        let mut y: Vec<usize> = (0..800).map(|i| i % k).collect();
        y.shuffle(&mut rng);
        let s = fit_and_score((&x[..400], &y[..400]), (&x[400..], &y[400..]), k, FitOptions::default()).unwrap();
        assert!((s.accuracy - 0.25).abs() < 0.1, "{}", s.accuracy);
    }

    #[test]
    fn train_as_test_matches_train_accuracy() {
        let x: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![(i % 3) as f64 * 2.0 + (i as f64 * 0.37).sin() * 0.1])
            .collect();
        let y: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let s = fit_and_score((&x, &y), (&x, &y), 3, FitOptions::default()).unwrap();
        assert!(s.accuracy >= s.train_accuracy && s.accuracy == 1.0);
    }
}
