use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Real};
use crate::error::{AomError, Result};

use super::mask::ScaleMask;

fn default_recon() -> f64 {
    0.2
}
fn default_align() -> f64 {
    0.8
}
fn default_tau() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    #[serde(default = "default_recon")]
    pub lambda_recon: f64,
    #[serde(default = "default_align")]
    pub lambda_align: f64,
    #[serde(default = "default_tau")]
    pub temperature: f64,
    /// Drop the `k = i` term from the InfoNCE denominator.
    #[serde(default)]
    pub exclude_self: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_recon: default_recon(),
            lambda_align: default_align(),
            temperature: default_tau(),
            exclude_self: false,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_recon >= 0.0) || !(self.lambda_align >= 0.0) {
            return Err(AomError::invalid("loss weights must be non-negative"));
        }
        if !(self.temperature > 0.0) {
            return Err(AomError::invalid("temperature must be positive"));
        }
        Ok(())
    }
}

/// Mean squared error per scale on masked rows, averaged over scales.
/// `targets[i]` holds every row of scale `i`; `preds[i]` the masked rows in
/// index order.
pub fn recon_loss<T: Real>(preds: &[Matrix<T>], targets: &[Matrix<T>], plans: &[ScaleMask]) -> Result<f64> {
    if preds.len() != targets.len() || preds.len() != plans.len() || preds.is_empty() {
        return Err(AomError::shape(format!(
            "{} predictions, {} targets, {} plans",
            preds.len(),
            targets.len(),
            plans.len()
        )));
    }
    let mut total = 0.0;
    for ((p, t), plan) in preds.iter().zip(targets).zip(plans) {
        let masked = plan.masked_idx();
        if t.rows() != plan.len() || p.rows() != masked.len() || p.cols() != t.cols() {
            return Err(AomError::shape(format!(
                "prediction {:?} / target {:?} inconsistent with plan of {} rows ({} masked)",
                p.shape(),
                t.shape(),
                plan.len(),
                masked.len()
            )));
        }
        if masked.is_empty() {
            continue;
        }
        let mut sum = 0.0;
        for (k, &r) in masked.iter().enumerate() {
            for (a, b) in p.row(k).iter().zip(t.row(r)) {
                let d = a.as_f64() - b.as_f64();
                sum += d * d;
            }
        }
        total += sum / (masked.len() * t.cols()) as f64;
    }
    Ok(total / preds.len() as f64)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Cross-scale InfoNCE with the self term in the denominator.
pub fn align_loss(h: &[Vec<f64>], tau: f64) -> Result<f64> {
    align_loss_with(h, tau, false)
}

pub fn align_loss_with(h: &[Vec<f64>], tau: f64, exclude_self: bool) -> Result<f64> {
    let n = h.len();
    if n < 2 {
        return Err(AomError::invalid("alignment needs at least two scales"));
    }
    if !(tau > 0.0) {
        return Err(AomError::invalid("temperature must be positive"));
    }
    if let Some(i) = h.iter().position(|v| v.iter().all(|&x| x == 0.0)) {
        return Err(AomError::Numerical(format!("zero-norm projection at scale {i}")));
    }
    let mut loss = 0.0;
    for i in 0..n {
        let logits: Vec<f64> = (0..n).map(|k| cosine(&h[i], &h[k]) / tau).collect();
        let terms = (0..n).filter(|&k| !(exclude_self && k == i));
        let max = terms.clone().map(|k| logits[k]).fold(f64::NEG_INFINITY, f64::max);
        let lse = max + terms.map(|k| (logits[k] - max).exp()).sum::<f64>().ln();
        for j in (0..n).filter(|&j| j != i) {
            loss -= logits[j] - lse;
        }
    }
    Ok(loss)
}

pub fn total_loss(recon: f64, align: f64, w: &LossWeights) -> f64 {
    w.lambda_recon * recon + w.lambda_align * align
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::autodiff::Tape;
    use crate::pretrain::sample_mask;

    #[test]
    fn closed_form_alignment() {
        let a = align_loss(&[vec![1.0, 0.0], vec![1.0, 0.0]], 0.5).unwrap();
        assert!((a - 2.0 * 2f64.ln()).abs() < 1e-12);
        let b = align_loss(&[vec![1.0, 0.0], vec![0.0, 1.0]], 0.5).unwrap();
        assert!((b - 2.0 * (1.0 + 2f64.exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn alignment_errors() {
        assert!(align_loss(&[vec![1.0]], 0.5).is_err());
        assert!(align_loss(&[vec![1.0], vec![0.0]], 0.5).is_err());
        assert!(align_loss(&[vec![1.0], vec![1.0]], 0.0).is_err());
    }

    #[test]
    fn rotation_invariance() {
        let h = vec![vec![1.0, 2.0], vec![-0.5, 1.0], vec![0.3, -2.0]];
        let t = 0.7f64;
        let rot: Vec<Vec<f64>> = h
            .iter()
            .map(|v| vec![t.cos() * v[0] - t.sin() * v[1], t.sin() * v[0] + t.cos() * v[1]])
            .collect();
        let (a, b) = (align_loss(&h, 0.5).unwrap(), align_loss(&rot, 0.5).unwrap());
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn aligned_configuration_is_a_lower_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for n in [2usize, 3] {
            let aligned = align_loss(&vec![vec![1.0, 0.0, 0.0]; n], 0.5).unwrap();
            for _ in 0..2000 {
                let h: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect();
                assert!(align_loss(&h, 0.5).unwrap() >= aligned - 1e-12);
            }
        }
    }

    #[test]
    fn tape_matches_plain_alignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for exclude_self in [false, true] {
            let h: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let mut tape = Tape::<f64>::new();
            let v = tape.constant(Matrix::from_vec(3, 5, h.concat()));
            let l = tape.info_nce(v, 0.5, exclude_self);
            let want = align_loss_with(&h, 0.5, exclude_self).unwrap();
            assert!((tape.value(l).item() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_error_gives_delta_squared() {
        let plan = sample_mask(20, 1, 0.5, "token", 3).unwrap();
        let target = Matrix::from_fn(20, 4, |i, j| (i * 4 + j) as f64 * 0.1);
        let pred = target.select_rows(&plan.masked_idx()).map(|v| v + 0.3);
        let l = recon_loss(
            std::slice::from_ref(&pred),
            std::slice::from_ref(&target),
            std::slice::from_ref(&plan),
        )
        .unwrap();
        assert!((l - 0.09).abs() < 1e-9);
        let exact = target.select_rows(&plan.masked_idx());
        assert_eq!(
            recon_loss(&[exact], std::slice::from_ref(&target), std::slice::from_ref(&plan)).unwrap(),
            0.0
        );
        let dup = recon_loss(&[pred.clone(), pred], &[target.clone(), target], &[plan.clone(), plan]).unwrap();
        assert!((dup - l).abs() < 1e-15);
    }

    #[test]
    fn total_is_weighted_sum() {
        assert_eq!(total_loss(1.0, 1.0, &LossWeights::default()), 1.0);
        let zero = LossWeights {
            lambda_recon: 0.0,
            lambda_align: 0.0,
            ..LossWeights::default()
        };
        assert_eq!(total_loss(3.0, 7.0, &zero), 0.0);
    }

    proptest! {
        #[test]
        fn visible_targets_do_not_matter(n in 2usize..80, ratio in 0.05f64..0.95, seed in any::<u64>(), bump in -5.0f64..5.0) {
            let plan = sample_mask(n, 1, ratio, "token", seed).unwrap();
            let target = Matrix::from_fn(n, 3, |i, j| ((i * 7 + j) % 5) as f64);
            let pred = Matrix::from_fn(plan.masked_idx().len(), 3, |i, j| (i + j) as f64 * 0.2);
            let base = recon_loss(std::slice::from_ref(&pred), std::slice::from_ref(&target), std::slice::from_ref(&plan)).unwrap();
            let mut t2 = target.clone();
            for r in plan.visible_idx() {
                t2.row_mut(r).iter_mut().for_each(|v| *v += bump);
            }
            prop_assert_eq!(recon_loss(&[pred], &[t2], &[plan]).unwrap(), base);
        }

        #[test]
        fn total_is_linear(r in 0.0f64..10.0, a in 0.0f64..10.0, l1 in 0.0f64..2.0, l2 in 0.0f64..2.0) {
            let w = LossWeights { lambda_recon: l1, lambda_align: l2, ..LossWeights::default() };
            prop_assert!((total_loss(2.0 * r, a, &w) - total_loss(r, a, &w) - l1 * r).abs() < 1e-9);
        }
    }
}
