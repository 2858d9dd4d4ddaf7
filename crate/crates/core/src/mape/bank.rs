use std::borrow::Cow;

use crate::autodiff::Real;
use crate::data::BandStack;
use crate::error::{AomError, Result};
use crate::sitok::{assemble_tokens, channel_patch_embed, ChannelEncoding, PatchKernel, SpatialGrid, TokenSequence};

use super::resize::{resize_kernel, KernelResizer, PiResize};

pub const DEFAULT_BANK_SIZES: [usize; 3] = [16, 32, 64];

/// Native single-channel kernels with strictly increasing patch sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank<T> {
    kernels: Vec<PatchKernel<T>>,
}

impl<T: Real> KernelBank<T> {
    pub fn new(kernels: Vec<PatchKernel<T>>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(AomError::invalid("kernel bank is empty"));
        }
        let d = kernels[0].embed_dim();
        for w in kernels.windows(2) {
            if w[1].patch_size() <= w[0].patch_size() {
                return Err(AomError::invalid(format!(
                    "bank patch sizes must be strictly increasing, got {} then {}",
                    w[0].patch_size(),
                    w[1].patch_size()
                )));
            }
        }
        if let Some(k) = kernels.iter().find(|k| k.embed_dim() != d) {
            return Err(AomError::invalid(format!(
                "bank kernels disagree on embed dim: {} vs {d}",
                k.embed_dim()
            )));
        }
        Ok(Self { kernels })
    }

    pub fn kernels(&self) -> &[PatchKernel<T>] {
        &self.kernels
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.kernels.iter().map(|k| k.patch_size()).collect()
    }

    pub fn embed_dim(&self) -> usize {
        self.kernels[0].embed_dim()
    }
}

/// Index of the closest size; ties go to the smaller size.
pub fn nearest_index(sizes: &[usize], p_t: usize) -> usize {
    let mut best = 0;
    for (i, &p) in sizes.iter().enumerate() {
        let (d, db) = (p.abs_diff(p_t), sizes[best].abs_diff(p_t));
        if d < db || (d == db && p < sizes[best]) {
            best = i;
        }
    }
    best
}

pub fn select_kernel<T: Real>(bank: &KernelBank<T>, p_t: usize) -> Result<(usize, Cow<'_, PatchKernel<T>>)> {
    select_kernel_with(bank, p_t, &PiResize)
}

pub fn select_kernel_with<'a, T: Real>(
    bank: &'a KernelBank<T>,
    p_t: usize,
    resizer: &dyn KernelResizer,
) -> Result<(usize, Cow<'a, PatchKernel<T>>)> {
    if p_t == 0 {
        return Err(AomError::invalid("target patch size must be >= 1"));
    }
    let i = nearest_index(&bank.sizes(), p_t);
    let k = &bank.kernels[i];
    if k.patch_size() == p_t {
        Ok((i, Cow::Borrowed(k)))
    } else {
        Ok((i, Cow::Owned(resize_kernel(k, p_t, resizer)?)))
    }
}

pub fn embed_at_scale<T: Real>(
    stack: &BandStack,
    bank: &KernelBank<T>,
    p_t: usize,
    ch_enc: &ChannelEncoding,
    sp_enc: &SpatialGrid,
) -> Result<TokenSequence<T>> {
    embed_at_scale_with(stack, bank, p_t, ch_enc, sp_enc, &PiResize)
}

pub fn embed_at_scale_with<T: Real>(
    stack: &BandStack,
    bank: &KernelBank<T>,
    p_t: usize,
    ch_enc: &ChannelEncoding,
    sp_enc: &SpatialGrid,
    resizer: &dyn KernelResizer,
) -> Result<TokenSequence<T>> {
    crate::sitok::check_divisible(stack, p_t)?;
    let (_, k) = select_kernel_with(bank, p_t, resizer)?;
    let grid = channel_patch_embed(stack, &k)?;
    assemble_tokens(&grid, ch_enc, sp_enc)
}
