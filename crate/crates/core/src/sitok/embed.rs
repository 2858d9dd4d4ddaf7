use crate::autodiff::{Matrix, Real};
use crate::data::BandStack;
use crate::error::{AomError, Result};

use super::kernel::PatchKernel;

/// Per-channel patch tokens, `C x N_H x N_W x D`, stored channel-major with
/// one row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid<T> {
    tokens: Matrix<T>,
    channel_indices: Vec<usize>,
    patch_size: usize,
    source_shape: (usize, usize),
}

impl<T: Real> TokenGrid<T> {
    pub fn tokens(&self) -> &Matrix<T> {
        &self.tokens
    }

    pub fn channel_indices(&self) -> &[usize] {
        &self.channel_indices
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn source_shape(&self) -> (usize, usize) {
        self.source_shape
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (
            self.source_shape.0 / self.patch_size,
            self.source_shape.1 / self.patch_size,
        )
    }

    pub fn embed_dim(&self) -> usize {
        self.tokens.cols()
    }

    pub fn tokens_per_channel(&self) -> usize {
        let (nh, nw) = self.grid_shape();
        nh * nw
    }

    /// Token `(c, r, q)` where `c` is the position within the stack.
    pub fn token(&self, c: usize, r: usize, q: usize) -> &[T] {
        let (nh, nw) = self.grid_shape();
        self.tokens.row((c * nh + r) * nw + q)
    }

    /// The `N_H * N_W` rows of channel block `c`.
    pub fn block(&self, c: usize) -> Matrix<T> {
        let n = self.tokens_per_channel();
        self.tokens.select_rows(&(c * n..(c + 1) * n).collect::<Vec<_>>())
    }
}

pub(crate) fn check_divisible(stack: &BandStack, p: usize) -> Result<()> {
    if p == 0 || !stack.height().is_multiple_of(p) || !stack.width().is_multiple_of(p) {
        return Err(AomError::NotDivisible {
            h: stack.height(),
            w: stack.width(),
            p,
        });
    }
    Ok(())
}

/// Non-overlapping `P x P` patches of every plane, one row per token in
/// channel-major / row-major order, pixels row-major within the patch.
pub fn extract_patches<T: Real>(stack: &BandStack, p: usize) -> Result<Matrix<T>> {
    check_divisible(stack, p)?;
    let (h, w) = (stack.height(), stack.width());
    let (nh, nw) = (h / p, w / p);
    let mut out = Matrix::zeros(stack.channels() * nh * nw, p * p);
    for c in 0..stack.channels() {
        let plane = stack.plane(c);
        for r in 0..nh {
            for q in 0..nw {
                let row = out.row_mut((c * nh + r) * nw + q);
                for py in 0..p {
                    for px in 0..p {
                        row[py * p + px] = T::from_f64_lossy(plane[(r * p + py) * w + q * p + px] as f64);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Applies the shared single-channel kernel to every plane independently.
pub fn channel_patch_embed<T: Real>(stack: &BandStack, kernel: &PatchKernel<T>) -> Result<TokenGrid<T>> {
    let p = kernel.patch_size();
    let patches = extract_patches::<T>(stack, p)?;
    let d = kernel.embed_dim();
    let w = kernel.weights();
    let mut tokens = Matrix::zeros(patches.rows(), d);
    for i in 0..patches.rows() {
        let patch = patches.row(i);
        let out = tokens.row_mut(i);
        out.copy_from_slice(kernel.bias());
        for (k, &x) in patch.iter().enumerate() {
            let wrow = w.row(k);
            for j in 0..d {
                out[j] = out[j] + x * wrow[j];
            }
        }
    }
    Ok(TokenGrid {
        tokens,
        channel_indices: stack.channel_indices().to_vec(),
        patch_size: p,
        source_shape: (stack.height(), stack.width()),
    })
}
