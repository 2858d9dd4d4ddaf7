use rand::seq::index::sample;
use serde::Serialize;

use crate::autodiff::Matrix;
use crate::data::{generate_split, BandStack, Split};
use crate::error::{AomError, Result};
use crate::net::{AomModel, ParamStore};
use crate::seed;

use super::config::TrainConfig;
use super::schedule::{scale_schedules, StepScales};
use super::trainer::{batch_loss, MODEL_TAG};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckEntry {
    pub name: String,
    pub offset: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub eps: f64,
    pub max_rel_error: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Central differences at `picks` (flat parameter positions) against
/// `analytic`, evaluating `loss` on perturbed copies of `params`.
pub fn finite_difference_check(
    params: &ParamStore<f64>,
    analytic: &[Matrix<f64>],
    picks: &[usize],
    eps: f64,
    mut loss: impl FnMut(&ParamStore<f64>) -> Result<f64>,
) -> Result<GradCheckReport> {
    let mut work = params.clone();
    let mut entries = Vec::with_capacity(picks.len());
    for &k in picks {
        let (id, off) = params
            .locate(k)
            .ok_or_else(|| AomError::invalid(format!("parameter position {k} out of range")))?;
        let orig = params.get(id).as_slice()[off];
        work.get_mut(id).as_mut_slice()[off] = orig + eps;
        let up = loss(&work)?;
        work.get_mut(id).as_mut_slice()[off] = orig - eps;
        let down = loss(&work)?;
        work.get_mut(id).as_mut_slice()[off] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[id].as_slice()[off];
        if !a.is_finite() || !numeric.is_finite() {
            return Err(AomError::Numerical(format!(
                "non-finite gradient for {}[{off}]",
                params.name(id)
            )));
        }
        entries.push(GradCheckEntry {
            name: params.name(id).to_string(),
            offset: off,
            analytic: a,
            numeric,
            rel_error: rel_error(a, numeric),
        });
    }
    let max_rel_error = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        eps,
        max_rel_error,
        entries,
    })
}

/// Checks the gradient of the full pretraining objective on `images` at
/// `num_params` random parameter positions. Masks are fixed by `seed`.
pub fn grad_check(
    model: &AomModel<f64>,
    images: &[BandStack],
    config: &TrainConfig,
    num_params: usize,
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let refs: Vec<&BandStack> = images.iter().collect();
    let scales: StepScales = {
        let mut rng = seed::rng(seed, &[0x5c]);
        scale_schedules()
            .create(&config.scale_schedule)?
            .scales(0, config.patch_size_set.len(), &mut rng)
    };
    let mask_seed = seed::derive(seed, &[0x6d]);
    let (_, grads) = batch_loss(model, &refs, config, &scales, mask_seed, true)?;
    let grads = grads.expect("gradients requested");
    let total = model.num_params();
    let mut rng = seed::rng(seed, &[0x9c]);
    let mut picks = sample(&mut rng, total, num_params.min(total)).into_vec();
    picks.sort_unstable();
    let mut probe = model.clone();
    finite_difference_check(model.params(), &grads, &picks, eps, |p| {
        *probe.params_mut() = p.clone();
        Ok(batch_loss(&probe, &refs, config, &scales, mask_seed, false)?.0.total)
    })
}

/// Gradient check of a freshly initialised 64-bit model built from `config`,
/// on `images` pretraining scenes restricted to `bands` if given.
pub fn grad_check_config(
    config: &TrainConfig,
    bands: Option<&[usize]>,
    images: usize,
    num_params: usize,
    eps: f64,
) -> Result<GradCheckReport> {
    config.validate()?;
    let model = AomModel::<f64>::new(config.model_config(), seed::derive(config.seed, &[MODEL_TAG]))?;
    let stacks = generate_split(&config.data, Split::Pretrain, images, config.seed)?
        .into_iter()
        .map(|(s, _)| match bands {
            Some(b) => s.select_bands(b),
            None => Ok(s),
        })
        .collect::<Result<Vec<_>>>()?;
    grad_check(&model, &stacks, config, num_params, eps, config.seed)
}
