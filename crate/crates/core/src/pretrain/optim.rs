use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Real};
use crate::net::ParamStore;

/// Linear warmup then cosine decay to `min_lr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineSchedule {
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl CosineSchedule {
    /// Rate for 0-based `step`.
    pub fn lr(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.base_lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps).max(1);
        let t = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        self.min_lr + 0.5 * (self.base_lr - self.min_lr) * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

/// Adam with decoupled weight decay. Decay applies to `.weight` tensors only.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
    decay: Vec<bool>,
    t: u64,
}

impl<T: Real> AdamW<T> {
    pub fn new(params: &ParamStore<T>, betas: (f64, f64), weight_decay: f64) -> Self {
        Self {
            beta1: betas.0,
            beta2: betas.1,
            eps: 1e-8,
            weight_decay,
            m: params.zeros_like(),
            v: params.zeros_like(),
            decay: params.names().iter().map(|n| n.ends_with(".weight")).collect(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Matrix<T>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2) = (T::from_f64_lossy(self.beta1), T::from_f64_lossy(self.beta2));
        let (o1, o2) = (T::one() - b1, T::one() - b2);
        let step = T::from_f64_lossy(lr / c1);
        let c2 = T::from_f64_lossy(c2);
        let eps = T::from_f64_lossy(self.eps);
        for (id, g) in grads.iter().enumerate() {
            let shrink = if self.decay[id] {
                T::from_f64_lossy(1.0 - lr * self.weight_decay)
            } else {
                T::one()
            };
            let p = params.get_mut(id).as_mut_slice();
            let m = self.m[id].as_mut_slice();
            let v = self.v[id].as_mut_slice();
            for k in 0..p.len() {
                let gk = g.as_slice()[k];
                m[k] = b1 * m[k] + o1 * gk;
                v[k] = b2 * v[k] + o2 * gk * gk;
                let denom = (v[k] / c2).sqrt() + eps;
                p[k] = p[k] * shrink - step * m[k] / denom;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_then_cosine() {
        let s = CosineSchedule {
            base_lr: 1.0,
            min_lr: 0.0,
            warmup_steps: 10,
            total_steps: 110,
        };
        assert!((s.lr(0) - 0.1).abs() < 1e-12);
        assert!((s.lr(9) - 1.0).abs() < 1e-12);
        assert!((s.lr(10) - 1.0).abs() < 1e-12);
        assert!((s.lr(60) - 0.5).abs() < 1e-12);
        assert!(s.lr(109) < 0.01);
        assert_eq!(s.lr(500), 0.0);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut p = ParamStore::<f64>::new();
        p.insert("w.weight", Matrix::from_vec(1, 2, vec![1.0, -1.0])).unwrap();
        p.insert("w.bias", Matrix::from_vec(1, 1, vec![0.5])).unwrap();
        let mut opt = AdamW::new(&p, (0.9, 0.999), 0.0);
        let g = vec![
            Matrix::from_vec(1, 2, vec![3.0, -0.2]),
            Matrix::from_vec(1, 1, vec![1e-3]),
        ];
        opt.step(&mut p, &g, 0.01);
        let w = p.get(0).as_slice();
        assert!((w[0] - 0.99).abs() < 1e-6 && (w[1] + 0.99).abs() < 1e-6);
        assert!((p.get(1).item() - 0.49).abs() < 1e-4);
    }

    #[test]
    fn decay_only_on_weights() {
        let mut p = ParamStore::<f64>::new();
        p.insert("a.weight", Matrix::from_vec(1, 1, vec![1.0])).unwrap();
        p.insert("a.bias", Matrix::from_vec(1, 1, vec![1.0])).unwrap();
        let mut opt = AdamW::new(&p, (0.9, 0.999), 0.5);
        opt.step(&mut p, &[Matrix::zeros(1, 1), Matrix::zeros(1, 1)], 0.1);
        assert!((p.get(0).item() - 0.95).abs() < 1e-12);
        assert_eq!(p.get(1).item(), 1.0);
    }
}
