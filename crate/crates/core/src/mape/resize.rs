use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use crate::autodiff::{Matrix, Real};
use crate::error::{AomError, Result};
use crate::registry::Registry;
use crate::sitok::PatchKernel;

use super::pinv::pinv;
use super::resize_matrix::build_resize_matrix;

/// Maps native kernel weights (`P^2 x D`) to target weights (`P_t^2 x D`)
/// through a fixed linear operator `R`, `W' = R W`.
pub trait KernelResizer: Send + Sync {
    fn name(&self) -> &'static str;
    /// The `P_out^2 x P_in^2` operator.
    fn build_operator(&self, p_in: usize, p_out: usize) -> Result<Matrix<f64>>;
}

/// `R = pinv(B^T)`: minimises expected response distortion under white input.
#[derive(Debug, Default, Clone, Copy)]
pub struct PiResize;

impl KernelResizer for PiResize {
    fn name(&self) -> &'static str {
        "pi"
    }

    fn build_operator(&self, p_in: usize, p_out: usize) -> Result<Matrix<f64>> {
        let b = build_resize_matrix(p_in, p_out)?;
        pinv(&b.entries.transpose())
    }
}

/// Resamples the kernel like an image, `R = B`. Baseline only.
#[derive(Debug, Default, Clone, Copy)]
pub struct BilinearResize;

impl KernelResizer for BilinearResize {
    fn name(&self) -> &'static str {
        "bilinear"
    }

    fn build_operator(&self, p_in: usize, p_out: usize) -> Result<Matrix<f64>> {
        Ok(build_resize_matrix(p_in, p_out)?.entries)
    }
}

pub fn kernel_resizers() -> Registry<dyn KernelResizer> {
    let mut r: Registry<dyn KernelResizer> = Registry::new("kernel resizer");
    r.register("pi", || Box::new(PiResize));
    r.register("bilinear", || Box::new(BilinearResize));
    r
}

type OperatorCache = RwLock<HashMap<(&'static str, usize, usize), Arc<Matrix<f64>>>>;

fn cache() -> &'static OperatorCache {
    static CACHE: OnceLock<OperatorCache> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Memoised operator for `(resizer, p_in, p_out)`.
pub fn resize_operator(resizer: &dyn KernelResizer, p_in: usize, p_out: usize) -> Result<Arc<Matrix<f64>>> {
    let key = (resizer.name(), p_in, p_out);
    if let Some(op) = cache().read().expect("operator cache poisoned").get(&key) {
        return Ok(op.clone());
    }
    let op = Arc::new(resizer.build_operator(p_in, p_out)?);
    let mut w = cache().write().expect("operator cache poisoned");
    Ok(w.entry(key).or_insert(op).clone())
}

pub fn resize_kernel<T: Real>(
    kernel: &PatchKernel<T>,
    p_t: usize,
    resizer: &dyn KernelResizer,
) -> Result<PatchKernel<T>> {
    if p_t == 0 {
        return Err(AomError::invalid("target patch size must be >= 1"));
    }
    let p = kernel.patch_size();
    if p_t == p {
        return Ok(kernel.clone());
    }
    let op = resize_operator(resizer, p, p_t)?.cast::<T>();
    PatchKernel::new(p_t, op.matmul(kernel.weights()), kernel.bias().to_vec())
}

/// Pseudo-inverse resize of every output dimension; bias untouched.
pub fn pi_resize<T: Real>(kernel: &PatchKernel<T>, p_t: usize) -> Result<PatchKernel<T>> {
    resize_kernel(kernel, p_t, &PiResize)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;

    fn random_kernel(rng: &mut ChaCha8Rng, p: usize, d: usize) -> PatchKernel<f64> {
        let w = Matrix::from_fn(p * p, d, |_, _| StandardNormal.sample(rng));
        PatchKernel::new(p, w, (0..d).map(|i| i as f64).collect()).unwrap()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn same_size_is_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let k = random_kernel(&mut rng, 8, 3);
        assert_eq!(pi_resize(&k, 8).unwrap(), k);
        let op = PiResize.build_operator(8, 8).unwrap();
        let i = Matrix::<f64>::identity(64);
        for (a, b) in op.as_slice().iter().zip(i.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn upsizing_preserves_responses() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = random_kernel(&mut rng, 4, 2);
        let k2 = pi_resize(&k, 8).unwrap();
        assert_eq!(k2.bias(), k.bias());
        let b = build_resize_matrix(4, 8).unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..16).map(|_| StandardNormal.sample(&mut rng)).collect();
            let bx = b.apply(&x);
            for d in 0..2 {
                let (w, w2) = (k.slice(d), k2.slice(d));
                let tol = 1e-9 * dot(&x, &x).sqrt() * dot(&w, &w).sqrt();
                assert!((dot(&x, &w) - dot(&bx, &w2)).abs() <= tol);
            }
        }
    }

    #[test]
    fn operators_are_cached() {
        let a = resize_operator(&PiResize, 5, 7).unwrap();
        let b = resize_operator(&PiResize, 5, 7).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let c = resize_operator(&BilinearResize, 5, 7).unwrap();
        assert!(!Arc::ptr_eq(&a, &c));
    }

    #[test]
    fn registry_lists_both() {
        let r = kernel_resizers();
        assert_eq!(r.names(), vec!["bilinear", "pi"]);
        assert_eq!(r.create("pi").unwrap().name(), "pi");
        assert!(r.create("area").is_err());
    }

    #[test]
    fn f32_kernels_resize() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = random_kernel(&mut rng, 8, 4);
        let a = pi_resize(&k, 4).unwrap();
        let b = pi_resize(&k.cast::<f32>(), 4).unwrap();
        for (x, y) in a.weights().as_slice().iter().zip(b.weights().as_slice()) {
            assert!((x - *y as f64).abs() < 1e-5);
        }
    }
}
