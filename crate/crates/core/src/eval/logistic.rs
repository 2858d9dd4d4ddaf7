//! Multinomial logistic regression fitted by damped Newton iterations.

use nalgebra::{DMatrix, DVector};

use crate::error::{AomError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    /// Feature means and scales used for standardisation.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// `(K - 1) x (F + 1)`, last column is the bias; class `K - 1` is the
    /// reference with zero logits.
    pub weights: DMatrix<f64>,
    pub num_classes: usize,
    pub iterations: usize,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub l2: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            tol: 1e-6,
            max_iter: 200,
        }
    }
}

fn design(x: &[Vec<f64>], mean: &[f64], scale: &[f64]) -> DMatrix<f64> {
    let f = mean.len();
    DMatrix::from_fn(x.len(), f + 1, |i, j| {
        if j == f {
            1.0
        } else {
            (x[i][j] - mean[j]) / scale[j]
        }
    })
}

fn probs(z: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    // n x (K-1) logits, reference class logit 0
    let logits = z * w.transpose();
    let (n, km1) = logits.shape();
    let mut p = DMatrix::zeros(n, km1 + 1);
    for i in 0..n {
        let max = (0..km1).map(|k| logits[(i, k)]).fold(0.0f64, f64::max);
        let mut denom = (-max).exp();
        for k in 0..km1 {
            denom += (logits[(i, k)] - max).exp();
        }
        for k in 0..km1 {
            p[(i, k)] = (logits[(i, k)] - max).exp() / denom;
        }
        p[(i, km1)] = (-max).exp() / denom;
    }
    p
}

fn objective(z: &DMatrix<f64>, y: &[usize], w: &DMatrix<f64>, l2: f64) -> f64 {
    let p = probs(z, w);
    let n = y.len() as f64;
    let nll: f64 = y
        .iter()
        .enumerate()
        .map(|(i, &c)| -p[(i, c)].max(1e-300).ln())
        .sum::<f64>()
        / n;
    nll + 0.5 * l2 * w.norm_squared()
}

impl LogisticRegression {
    pub fn fit(x: &[Vec<f64>], y: &[usize], num_classes: usize, opts: FitOptions) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(AomError::invalid("probe needs matching, non-empty features and labels"));
        }
        if num_classes < 2 || y.iter().any(|&c| c >= num_classes) {
            return Err(AomError::invalid("labels out of range"));
        }
        let present = (0..num_classes).filter(|k| y.contains(k)).count();
        if present < 2 {
            return Err(AomError::invalid("probe training split has fewer than two classes"));
        }
        let f = x[0].len();
        if x.iter().any(|r| r.len() != f || r.iter().any(|v| !v.is_finite())) {
            return Err(AomError::invalid("ragged or non-finite features"));
        }
        let n = x.len() as f64;
        let mean: Vec<f64> = (0..f).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..f)
            .map(|j| {
                let v = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if v > 1e-24 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let z = design(x, &mean, &scale);
        let km1 = num_classes - 1;
        let d = f + 1;
        let mut w = DMatrix::zeros(km1, d);
        let mut grad_norm = f64::INFINITY;
        let mut iterations = 0;
        for it in 0..opts.max_iter {
            iterations = it;
            let p = probs(&z, &w);
            // gradient, (K-1) x d, flattened class-major
            let mut g = DVector::zeros(km1 * d);
            for i in 0..x.len() {
                for k in 0..km1 {
                    let r = p[(i, k)] - if y[i] == k { 1.0 } else { 0.0 };
                    for j in 0..d {
                        g[k * d + j] += r * z[(i, j)] / n;
                    }
                }
            }
            for k in 0..km1 {
                for j in 0..d {
                    g[k * d + j] += opts.l2 * w[(k, j)];
                }
            }
            grad_norm = g.amax();
            if grad_norm <= opts.tol {
                break;
            }
            let mut h = DMatrix::zeros(km1 * d, km1 * d);
            for i in 0..x.len() {
                let zi = z.row(i);
                let outer = zi.transpose() * zi;
                for a in 0..km1 {
                    for b in 0..km1 {
                        let c = p[(i, a)] * (if a == b { 1.0 } else { 0.0 } - p[(i, b)]) / n;
                        if c == 0.0 {
                            continue;
                        }
                        let mut blk = h.view_mut((a * d, b * d), (d, d));
                        blk += &outer * c;
                    }
                }
            }
            for q in 0..km1 * d {
                h[(q, q)] += opts.l2;
            }
            let step = h
                .cholesky()
                .ok_or_else(|| AomError::Numerical("probe Hessian not positive definite".into()))?
                .solve(&g);
            let f0 = objective(&z, y, &w, opts.l2);
            let slope = -g.dot(&step);
            let mut t = 1.0;
            loop {
                let cand = &w - DMatrix::from_row_slice(km1, d, step.as_slice()) * t;
                if objective(&z, y, &cand, opts.l2) <= f0 + 1e-4 * t * slope || t < 1e-10 {
                    w = cand;
                    break;
                }
                t *= 0.5;
            }
            iterations = it + 1;
        }
        Ok(Self {
            mean,
            scale,
            weights: w,
            num_classes,
            iterations,
            grad_norm,
        })
    }

    pub fn predict_proba(&self, x: &[Vec<f64>]) -> DMatrix<f64> {
        probs(&design(x, &self.mean, &self.scale), &self.weights)
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<usize> {
        let p = self.predict_proba(x);
        (0..x.len())
            .map(|i| {
                (0..self.num_classes)
                    .max_by(|&a, &b| p[(i, a)].total_cmp(&p[(i, b)]).then(b.cmp(&a)))
                    .unwrap()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    use super::*;

    fn blobs(n: usize, seed: u64, spread: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]];
        let noise = Normal::new(0.0, spread).unwrap();
        (0..n)
            .map(|i| {
                let c = i % 3;
                (
                    vec![
                        centers[c][0] + noise.sample(&mut rng),
                        centers[c][1] + noise.sample(&mut rng),
                        rng.gen(),
                    ],
                    c,
                )
            })
            .unzip()
    }

    #[test]
    fn converges_and_separates() {
        let (x, y) = blobs(300, 0, 0.5);
        let m = LogisticRegression::fit(&x, &y, 3, FitOptions::default()).unwrap();
        assert!(m.grad_norm <= 1e-6);
        let acc = m.predict(&x).iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / 300.0;
        assert!(acc > 0.97, "{acc}");
    }

    #[test]
    fn gradient_vanishes_at_solution() {
        let (x, y) = blobs(90, 1, 2.0);
        let opts = FitOptions::default();
        let m = LogisticRegression::fit(&x, &y, 3, opts).unwrap();
        let z = design(&x, &m.mean, &m.scale);
        let base = objective(&z, &y, &m.weights, opts.l2);
        for k in 0..m.weights.len() {
            let mut w = m.weights.clone();
            w.as_mut_slice()[k] += 1e-3;
            assert!(objective(&z, &y, &w, opts.l2) >= base);
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(LogisticRegression::fit(&x, &[0, 0], 2, FitOptions::default()).is_err());
    }
}
