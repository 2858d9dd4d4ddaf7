use std::io::Write;

use rand::seq::index::sample;

use crate::autodiff::{Matrix, Real, Var};
use crate::data::{generate_split, BandStack, Split};
use crate::error::{AomError, Result};
use crate::net::{AomModel, Checkpoint, Graph};
use crate::seed;

use super::config::TrainConfig;
use super::loss::total_loss;
use super::mask::sample_mask;
use super::optim::{AdamW, CosineSchedule};
use super::schedule::{scale_schedules, ScaleSchedule, StepScales};

const MASK_TAG: u64 = 0x6d61;
const BATCH_TAG: u64 = 0x6261;
const SCHEDULE_TAG: u64 = 0x7363;
pub(crate) const MODEL_TAG: u64 = 0x6d6f;

/// Loss components of one step, averaged over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    /// Per scale; `None` when the scale was not reconstructed this step.
    pub scale_recon: Vec<Option<f64>>,
    pub recon_mean: f64,
    pub align: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    /// 1-based.
    pub step: u64,
    pub loss: LossBreakdown,
    pub lr: f64,
    pub seed: u64,
}

impl StepMetrics {
    pub fn csv_header(n_scales: usize) -> String {
        let scales: Vec<String> = (0..n_scales).map(|i| format!("scale_recon_{i}")).collect();
        format!("step,{},recon_mean,align,total,lr,seed", scales.join(","))
    }

    pub fn csv_row(&self) -> String {
        let scales: Vec<String> = self
            .loss
            .scale_recon
            .iter()
            .map(|v| v.map(|x| format!("{x:.9}")).unwrap_or_default())
            .collect();
        format!(
            "{},{},{:.9},{:.9},{:.9},{:.6e},{}",
            self.step,
            scales.join(","),
            self.loss.recon_mean,
            self.loss.align,
            self.loss.total,
            self.lr,
            self.seed
        )
    }
}

fn normalize_rows<T: Real>(m: &mut Matrix<T>) {
    for r in 0..m.rows() {
        let row = m.row_mut(r);
        let n = T::from_usize(row.len()).unwrap();
        let mean = row.iter().fold(T::zero(), |s, &v| s + v) / n;
        let var = row.iter().fold(T::zero(), |s, &v| s + (v - mean) * (v - mean)) / n;
        let inv = T::one() / (var + T::from_f64_lossy(1e-6)).sqrt();
        row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
    }
}

struct ImageTerms {
    recon: Vec<(usize, Var)>,
    align: Option<Var>,
}

/// Records the losses of one image on `g`.
fn image_terms<T: Real>(
    g: &mut Graph<'_, T>,
    stack: &BandStack,
    config: &TrainConfig,
    scales: &StepScales,
    mask_seed: u64,
) -> Result<ImageTerms> {
    let model = g.model();
    let ch = model.channel_encoding(stack)?;
    let mut recon = Vec::new();
    let mut heads = Vec::new();
    for i in scales.forward() {
        let p = config.patch_size_set[i];
        let input = model.prepare_with(stack, p, &ch)?;
        let mask = sample_mask(
            input.len(),
            input.channels,
            config.mask_ratio,
            &config.mask_mode,
            seed::derive(mask_seed, &[i as u64]),
        )?;
        let (vis, masked) = (mask.visible_idx(), mask.masked_idx());
        if vis.is_empty() {
            return Err(AomError::invalid(format!(
                "mask ratio {} leaves no visible tokens at patch size {p}",
                config.mask_ratio
            )));
        }
        let x = g.embed_rows(&input, &vis)?;
        let e = g.encode(x);
        if scales.recon.contains(&i) {
            let r = if masked.is_empty() {
                g.tape.constant(Matrix::scalar(T::zero()))
            } else {
                let pred = g.decode(i, e, &input, &vis, &masked)?;
                let mut target = input.patches.select_rows(&masked);
                if config.norm_pix_targets {
                    normalize_rows(&mut target);
                }
                g.tape.mse(pred, &target)
            };
            recon.push((i, r));
        }
        if scales.align.contains(&i) {
            heads.push(g.pool_project(i, e)?);
        }
    }
    let align = if heads.len() >= 2 {
        let h = g.tape.concat_rows(&heads);
        Some(g.tape.info_nce(h, config.loss.temperature, config.loss.exclude_self))
    } else {
        None
    };
    Ok(ImageTerms { recon, align })
}

fn check_finite(v: f64, what: &str, image: usize) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(AomError::Numerical(format!(
            "non-finite {what} ({v}) on batch image {image}"
        )))
    }
}

/// Batch-mean loss and, if `with_grads`, its gradient for every parameter.
/// Images are processed in order and gradients summed in that order, so the
/// result is deterministic.
pub fn batch_loss<T: Real>(
    model: &AomModel<T>,
    images: &[&BandStack],
    config: &TrainConfig,
    scales: &StepScales,
    mask_seed: u64,
    with_grads: bool,
) -> Result<(LossBreakdown, Option<Vec<Matrix<T>>>)> {
    if images.is_empty() {
        return Err(AomError::invalid("empty batch"));
    }
    let n = config.patch_size_set.len();
    let b = images.len() as f64;
    let w = &config.loss;
    let mut grads = with_grads.then(|| model.params().zeros_like());
    let mut scale_sum = vec![0.0; n];
    let mut align_sum = 0.0;
    let n_recon = scales.recon.len().max(1) as f64;
    for (k, stack) in images.iter().enumerate() {
        let mut g = model.graph();
        let terms = image_terms(&mut g, stack, config, scales, seed::derive(mask_seed, &[k as u64]))?;
        let mut weighted = Vec::new();
        for &(i, r) in &terms.recon {
            let v = g.tape.value(r).item().as_f64();
            check_finite(v, &format!("reconstruction loss at scale {i}"), k)?;
            scale_sum[i] += v;
            weighted.push((r, T::from_f64_lossy(w.lambda_recon / n_recon / b)));
        }
        if let Some(a) = terms.align {
            let v = g.tape.value(a).item().as_f64();
            check_finite(v, "alignment loss", k)?;
            align_sum += v;
            weighted.push((a, T::from_f64_lossy(w.lambda_align / b)));
        }
        if let Some(grads) = grads.as_mut() {
            if weighted.is_empty() {
                continue;
            }
            let total = g.tape.weighted_sum(weighted);
            let gr = g.tape.backward(total);
            for (id, pg) in g.tape.param_grads(&gr) {
                grads[id].add_assign(pg);
            }
        }
    }
    let scale_recon: Vec<Option<f64>> = (0..n)
        .map(|i| scales.recon.contains(&i).then(|| scale_sum[i] / b))
        .collect();
    let recon_mean = scale_recon.iter().flatten().sum::<f64>() / n_recon;
    let align = align_sum / b;
    let loss = LossBreakdown {
        scale_recon,
        recon_mean,
        align,
        total: total_loss(recon_mean, align, w),
    };
    if let Some(grads) = &grads {
        if let Some(id) = grads.iter().position(|g| !g.all_finite()) {
            return Err(AomError::Numerical(format!(
                "non-finite gradient for {}",
                model.params().name(id)
            )));
        }
    }
    Ok((loss, grads))
}

/// Pretraining loop state.
pub struct Trainer<T: Real> {
    config: TrainConfig,
    model: AomModel<T>,
    optimizer: AdamW<T>,
    lr: CosineSchedule,
    schedule: Box<dyn ScaleSchedule>,
    dataset: Vec<BandStack>,
    step: u64,
}

impl<T: Real> Trainer<T> {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = AomModel::new(config.model_config(), seed::derive(config.seed, &[MODEL_TAG]))?;
        let dataset = generate_split(&config.data, Split::Pretrain, config.dataset_size, config.seed)?
            .into_iter()
            .map(|(s, _)| s)
            .collect();
        Self::with_parts(config, model, dataset)
    }

    pub fn with_parts(config: TrainConfig, model: AomModel<T>, dataset: Vec<BandStack>) -> Result<Self> {
        config.validate()?;
        if model.config() != &config.model_config() {
            return Err(AomError::invalid("model config does not match training config"));
        }
        if dataset.len() < config.batch_size {
            return Err(AomError::invalid(format!(
                "dataset of {} scenes is smaller than batch {}",
                dataset.len(),
                config.batch_size
            )));
        }
        let optimizer = AdamW::new(model.params(), config.betas, config.weight_decay);
        let lr = CosineSchedule {
            base_lr: config.learning_rate,
            min_lr: config.min_learning_rate,
            warmup_steps: config.warmup_steps,
            total_steps: config.steps,
        };
        let schedule = scale_schedules().create(&config.scale_schedule)?;
        Ok(Self {
            config,
            model,
            optimizer,
            lr,
            schedule,
            dataset,
            step: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &AomModel<T> {
        &self.model
    }

    pub fn into_model(self) -> AomModel<T> {
        self.model
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint::from_model(
            &self.model,
            Some(serde_json::to_value(&self.config)?),
            self.config.seed,
            self.step,
        ))
    }

    /// Dataset indices of the batch for 0-based `step`.
    pub fn batch_indices(&self, step: u64) -> Vec<usize> {
        let mut rng = seed::rng(self.config.seed, &[BATCH_TAG, step]);
        sample(&mut rng, self.dataset.len(), self.config.batch_size).into_vec()
    }

    pub fn step_scales(&self, step: u64) -> StepScales {
        let mut rng = seed::rng(self.config.seed, &[SCHEDULE_TAG, step]);
        self.schedule.scales(step, self.config.patch_size_set.len(), &mut rng)
    }

    /// One optimizer update on the next batch.
    pub fn pretrain_step(&mut self) -> Result<StepMetrics> {
        let step = self.step;
        let idx = self.batch_indices(step);
        let images: Vec<&BandStack> = idx.iter().map(|&i| &self.dataset[i]).collect();
        let scales = self.step_scales(step);
        let mask_seed = seed::derive(self.config.seed, &[MASK_TAG, step]);
        let (loss, grads) = batch_loss(&self.model, &images, &self.config, &scales, mask_seed, true)?;
        let lr = self.lr.lr(step);
        self.optimizer
            .step(self.model.params_mut(), &grads.expect("gradients requested"), lr);
        self.step += 1;
        Ok(StepMetrics {
            step: self.step,
            loss,
            lr,
            seed: self.config.seed,
        })
    }

    /// Runs `steps` updates, writing one CSV row per step if `log` is given.
    pub fn run(&mut self, steps: u64, mut log: Option<&mut dyn Write>) -> Result<Vec<StepMetrics>> {
        let mut out = Vec::with_capacity(steps as usize);
        if self.step == 0 {
            if let Some(w) = log.as_mut() {
                writeln!(w, "{}", StepMetrics::csv_header(self.config.patch_size_set.len()))
                    .map_err(|e| AomError::io("<metrics>", e))?;
            }
        }
        for _ in 0..steps {
            let m = self.pretrain_step()?;
            if let Some(w) = log.as_mut() {
                writeln!(w, "{}", m.csv_row()).map_err(|e| AomError::io("<metrics>", e))?;
            }
            out.push(m);
        }
        Ok(out)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::net::{DecoderConfig, EncoderConfig, ModelConfig};

    pub(crate) fn tiny_config() -> TrainConfig {
        let mut c = TrainConfig {
            model: ModelConfig {
                encoder: EncoderConfig {
                    depth: 1,
                    embed_dim: 16,
                    num_heads: 2,
                    mlp_ratio: 2.0,
                    layernorm_eps: 1e-6,
                },
                decoder: DecoderConfig {
                    depth: 1,
                    decoder_dim: 8,
                    num_heads: 2,
                    mlp_ratio: 2.0,
                },
                head_dim: 16,
                ..ModelConfig::default()
            },
            batch_size: 2,
            dataset_size: 8,
            steps: 5,
            warmup_steps: 1,
            ..TrainConfig::default()
        };
        c.data.image_size = 24;
        c
    }

    #[test]
    fn breakdown_accounting() {
        let mut t = Trainer::<f64>::new(tiny_config()).unwrap();
        let m = t.pretrain_step().unwrap();
        let r: Vec<f64> = m.loss.scale_recon.iter().map(|v| v.unwrap()).collect();
        assert_eq!(r.len(), 3);
        let mean = r.iter().sum::<f64>() / 3.0;
        assert!((m.loss.recon_mean - mean).abs() < 1e-12);
        assert!((m.loss.total - (0.2 * mean + 0.8 * m.loss.align)).abs() < 1e-12);
        assert_eq!(m.step, 1);
    }

    #[test]
    fn identical_seeds_identical_trajectories() {
        let run = || {
            let mut t = Trainer::<f32>::new(tiny_config()).unwrap();
            let mut buf = Vec::new();
            t.run(3, Some(&mut buf)).unwrap();
            (buf, t.into_model().params().clone())
        };
        let (a, pa) = run();
        let (b, pb) = run();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
        let text = String::from_utf8(a).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "step,scale_recon_0,scale_recon_1,scale_recon_2,recon_mean,align,total,lr,seed"
        );
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn cycle_schedule_reconstructs_one_scale() {
        let mut c = tiny_config();
        c.scale_schedule = "cycle".into();
        let mut t = Trainer::<f32>::new(c).unwrap();
        let m = t.pretrain_step().unwrap();
        assert_eq!(m.loss.scale_recon.iter().flatten().count(), 1);
        assert!(m.loss.scale_recon[0].is_some());
        assert!(m.loss.align > 0.0);
        assert!(m.csv_row().contains(",,"));
    }

    #[test]
    fn gradients_reach_native_kernels_through_resize() {
        let mut c = tiny_config();
        c.patch_size_set = vec![6];
        let t = Trainer::<f64>::new(c.clone()).unwrap();
        let images: Vec<&BandStack> = t.dataset.iter().take(1).collect();
        let scales = t.step_scales(0);
        let (_, g) = batch_loss(t.model(), &images, &c, &scales, 1, true).unwrap();
        let g = g.unwrap();
        let id = t.model().params().id("bank.k4.weight").unwrap();
        assert!(g[id].frobenius_norm() > 0.0);
        let id8 = t.model().params().id("bank.k8.weight").unwrap();
        assert_eq!(g[id8].frobenius_norm(), 0.0);
    }

    #[test]
    fn zero_ratio_has_zero_reconstruction() {
        let mut c = tiny_config();
        c.mask_ratio = 0.0;
        let mut t = Trainer::<f32>::new(c).unwrap();
        let m = t.pretrain_step().unwrap();
        assert_eq!(m.loss.recon_mean, 0.0);
    }
}
