//! Ablation harnesses: band subsets, patch sizes, loss weights, spectral
//! encoding. Each produces one CSV-ready report.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{AomError, Result};
use crate::net::AomModel;
use crate::pretrain::{TrainConfig, Trainer};

use super::logistic::FitOptions;
use super::probe::{checkpoint_id, linear_probe_on, ProbeConfig, ProbeData, ProbeResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    Bands,
    PatchSize,
    Loss,
    Encoding,
}

impl AblationAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            AblationAxis::Bands => "bands",
            AblationAxis::PatchSize => "patch_size",
            AblationAxis::Loss => "loss",
            AblationAxis::Encoding => "encoding",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: String,
    pub result: ProbeResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub axis: AblationAxis,
    pub rows: Vec<AblationRow>,
    /// `key=value` lines written after the table as `# key=value`.
    pub footer: Vec<(String, String)>,
}

/// Header of [`AblationReport::to_csv`]; `class_k` columns follow per class.
pub const ABLATION_COLUMNS: &str =
    "axis,setting,seed,band_count,bands,patch_size,accuracy,train_accuracy,checkpoint_id";

fn fmt_f(v: f64) -> String {
    format!("{v:.6}")
}

impl AblationReport {
    pub fn new(axis: AblationAxis) -> Self {
        Self {
            axis,
            rows: Vec::new(),
            footer: Vec::new(),
        }
    }

    /// Settings in first-seen order with their mean accuracy over seeds.
    pub fn mean_by_setting(&self) -> Vec<(String, f64)> {
        let mut order: Vec<(String, f64, usize)> = Vec::new();
        for row in &self.rows {
            match order.iter_mut().find(|(s, _, _)| *s == row.setting) {
                Some(e) => {
                    e.1 += row.result.accuracy;
                    e.2 += 1;
                }
                None => order.push((row.setting.clone(), row.result.accuracy, 1)),
            }
        }
        order.into_iter().map(|(s, sum, n)| (s, sum / n as f64)).collect()
    }

    /// Max minus min of the per-setting mean accuracy.
    pub fn spread(&self) -> f64 {
        let means: Vec<f64> = self.mean_by_setting().into_iter().map(|(_, m)| m).collect();
        if means.is_empty() {
            return 0.0;
        }
        let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = means.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }

    pub fn to_csv(&self) -> String {
        let classes = self
            .rows
            .iter()
            .map(|r| r.result.per_class_accuracy.len())
            .max()
            .unwrap_or(0);
        let mut out = String::from(ABLATION_COLUMNS);
        for k in 0..classes {
            let _ = write!(out, ",class_{k}");
        }
        out.push('\n');
        for row in &self.rows {
            let r = &row.result;
            let bands: Vec<String> = r.band_subset.iter().map(|b| b.to_string()).collect();
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                self.axis.as_str(),
                row.setting,
                r.seed,
                r.band_subset.len(),
                bands.join(" "),
                r.patch_size,
                fmt_f(r.accuracy),
                fmt_f(r.train_accuracy),
                r.checkpoint_id
            );
            for a in &r.per_class_accuracy {
                let _ = write!(out, ",{}", fmt_f(*a));
            }
            out.push('\n');
        }
        for (k, v) in &self.footer {
            let _ = writeln!(out, "# {k}={v}");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| AomError::io(path, e))
    }
}

fn subset_label(bands: &[usize]) -> String {
    let names: Vec<String> = bands.iter().map(|b| b.to_string()).collect();
    format!("{}b:{}", bands.len(), names.join("-"))
}

/// One probe per band subset on shared splits.
pub fn band_ablation<T: Real>(
    model: &AomModel<T>,
    data: &ProbeData,
    subsets: &[Vec<usize>],
    patch_size: usize,
    opts: FitOptions,
) -> Result<AblationReport> {
    let id = checkpoint_id(model);
    let mut report = AblationReport::new(AblationAxis::Bands);
    for subset in subsets {
        let result = linear_probe_on(model, &id, data, Some(subset), patch_size, opts)?;
        report.rows.push(AblationRow {
            setting: subset_label(subset),
            result,
        });
    }
    Ok(report)
}

/// One probe per patch size on shared splits; footer carries the spread.
pub fn patch_ablation<T: Real>(
    model: &AomModel<T>,
    data: &ProbeData,
    patch_sizes: &[usize],
    bands: Option<&[usize]>,
    opts: FitOptions,
) -> Result<AblationReport> {
    let image = data
        .train
        .first()
        .map(|(s, _)| (s.height(), s.width()))
        .ok_or_else(|| AomError::invalid("empty probe split"))?;
    for &p in patch_sizes {
        if p == 0 || image.0 % p != 0 || image.1 % p != 0 {
            return Err(AomError::NotDivisible {
                h: image.0,
                w: image.1,
                p,
            });
        }
    }
    let id = checkpoint_id(model);
    let mut report = AblationReport::new(AblationAxis::PatchSize);
    for &p in patch_sizes {
        let result = linear_probe_on(model, &id, data, bands, p, opts)?;
        report.rows.push(AblationRow {
            setting: format!("p{p}"),
            result,
        });
    }
    report.footer.push(("spread".into(), fmt_f(report.spread())));
    Ok(report)
}

/// Pretrained weights for one variant; the step log goes to `log` if given.
pub fn pretrain_model(config: &TrainConfig, log: Option<&mut dyn std::io::Write>) -> Result<AomModel<f32>> {
    let mut trainer = Trainer::<f32>::new(config.clone())?;
    trainer.run(config.steps, log)?;
    Ok(trainer.into_model())
}

/// Pretrains every `(label, config)` variant per seed and probes it.
/// The pretraining seed and the probe seed are both `seed`.
pub fn pretrain_probe_ablation(
    axis: AblationAxis,
    variants: &[(String, TrainConfig)],
    probe: &ProbeConfig,
    seeds: &[u64],
    bands: Option<&[usize]>,
    patch_size: usize,
) -> Result<AblationReport> {
    let mut report = AblationReport::new(axis);
    for &seed in seeds {
        let data = ProbeData::generate(probe, seed)?;
        for (label, config) in variants {
            let config = TrainConfig { seed, ..config.clone() };
            let model = pretrain_model(&config, None)?;
            let result = linear_probe_on(
                &model,
                &checkpoint_id(&model),
                &data,
                bands,
                patch_size,
                probe.fit_options(),
            )?;
            report.rows.push(AblationRow {
                setting: label.clone(),
                result,
            });
        }
    }
    for (s, m) in report.mean_by_setting() {
        report.footer.push((format!("mean_{s}"), fmt_f(m)));
    }
    Ok(report)
}

/// Reconstruction-only (`lambda_align = 0`) against the dual objective.
pub fn loss_variants(base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    let mut mse = base.clone();
    mse.loss.lambda_align = 0.0;
    let mut dual = base.clone();
    dual.loss.lambda_recon = 0.2;
    dual.loss.lambda_align = 0.8;
    vec![("mse".into(), mse), ("mse_infonce".into(), dual)]
}

/// Channel-index against wavelength spectral encoding.
pub fn encoding_variants(base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    ["index", "wavelength"]
        .iter()
        .map(|&mode| {
            let mut c = base.clone();
            c.model.channel_encoding = mode.into();
            (mode.to_string(), c)
        })
        .collect()
}

pub fn loss_ablation(
    base: &TrainConfig,
    probe: &ProbeConfig,
    seeds: &[u64],
    bands: Option<&[usize]>,
    patch_size: usize,
) -> Result<AblationReport> {
    pretrain_probe_ablation(
        AblationAxis::Loss,
        &loss_variants(base),
        probe,
        seeds,
        bands,
        patch_size,
    )
}

pub fn encoding_ablation(
    base: &TrainConfig,
    probe: &ProbeConfig,
    seeds: &[u64],
    bands: Option<&[usize]>,
    patch_size: usize,
) -> Result<AblationReport> {
    pretrain_probe_ablation(
        AblationAxis::Encoding,
        &encoding_variants(base),
        probe,
        seeds,
        bands,
        patch_size,
    )
}
