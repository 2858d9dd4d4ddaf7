use crate::autodiff::{Matrix, Real};
use crate::error::{AomError, Result};

/// Single-channel patch embedding: a `P x P x 1 x D` convolution with
/// stride `P`, stored as a `(P*P) x D` matrix (patch pixels row-major) plus a
/// `D`-vector bias.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchKernel<T> {
    weights: Matrix<T>,
    bias: Vec<T>,
    patch_size: usize,
}

impl<T: Real> PatchKernel<T> {
    pub fn new(patch_size: usize, weights: Matrix<T>, bias: Vec<T>) -> Result<Self> {
        if patch_size == 0 {
            return Err(AomError::invalid("patch size must be at least 1"));
        }
        if weights.rows() != patch_size * patch_size {
            return Err(AomError::shape(format!(
                "kernel of size {patch_size} needs {} weight rows, got {}",
                patch_size * patch_size,
                weights.rows()
            )));
        }
        if weights.cols() == 0 || bias.len() != weights.cols() {
            return Err(AomError::shape(format!(
                "bias length {} does not match embed dim {}",
                bias.len(),
                weights.cols()
            )));
        }
        if !weights.all_finite() || bias.iter().any(|v| !v.is_finite()) {
            return Err(AomError::Numerical("kernel entries must be finite".into()));
        }
        Ok(Self {
            weights,
            bias,
            patch_size,
        })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn embed_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    /// The `P x P` spatial slice feeding output dimension `d`.
    pub fn slice(&self, d: usize) -> Vec<T> {
        (0..self.weights.rows()).map(|k| self.weights.get(k, d)).collect()
    }

    pub fn cast<U: Real>(&self) -> PatchKernel<U> {
        PatchKernel {
            weights: self.weights.cast(),
            bias: self.bias.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect(),
            patch_size: self.patch_size,
        }
    }
}
