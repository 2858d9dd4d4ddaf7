use std::sync::Arc;

use crate::error::{AomError, Result};
use crate::resample::bilinear_resize;

use super::profile::SensorProfile;

/// A `C x H x W` multispectral image plus the global index of every plane.
#[derive(Debug, Clone, PartialEq)]
pub struct BandStack {
    profile: Arc<SensorProfile>,
    channel_indices: Vec<usize>,
    height: usize,
    width: usize,
    pixels: Vec<f32>,
    resolution_m: f64,
}

impl BandStack {
    /// Validates every invariant: distinct indices present in the profile,
    /// `C*H*W` finite pixels, positive resolution.
    pub fn new(
        profile: Arc<SensorProfile>,
        channel_indices: Vec<usize>,
        height: usize,
        width: usize,
        pixels: Vec<f32>,
        resolution_m: f64,
    ) -> Result<Self> {
        let stack = Self {
            profile,
            channel_indices,
            height,
            width,
            pixels,
            resolution_m,
        };
        stack.validate()?;
        Ok(stack)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channel_indices.is_empty() {
            return Err(AomError::shape(format!(
                "band stack must be non-empty, got {}x{}x{}",
                self.channel_indices.len(),
                self.height,
                self.width
            )));
        }
        let expected = self.channel_indices.len() * self.height * self.width;
        if self.pixels.len() != expected {
            return Err(AomError::shape(format!(
                "pixel buffer has {} values, expected {expected}",
                self.pixels.len()
            )));
        }
        for (i, &c) in self.channel_indices.iter().enumerate() {
            if !self.profile.contains(c) {
                return Err(AomError::UnknownChannel(c));
            }
            if self.channel_indices[..i].contains(&c) {
                return Err(AomError::invalid(format!("channel {c} listed twice")));
            }
        }
        if let Some(i) = self.pixels.iter().position(|v| !v.is_finite()) {
            return Err(self.non_finite_at(i));
        }
        if !(self.resolution_m.is_finite() && self.resolution_m > 0.0) {
            return Err(AomError::invalid("resolution_m must be positive"));
        }
        Ok(())
    }

    pub(crate) fn non_finite_at(&self, flat: usize) -> AomError {
        let plane = self.height * self.width;
        AomError::NonFinitePixel {
            c: flat / plane,
            y: (flat % plane) / self.width,
            x: flat % self.width,
        }
    }

    /// Every band of `profile` as a constant-zero stack (handy for tests).
    pub fn zeros(profile: Arc<SensorProfile>, height: usize, width: usize) -> Result<Self> {
        let idx = profile.channel_indices.clone();
        let n = idx.len() * height * width;
        Self::new(profile, idx, height, width, vec![0.0; n], 10.0)
    }

    pub fn profile(&self) -> &Arc<SensorProfile> {
        &self.profile
    }

    pub fn channel_indices(&self) -> &[usize] {
        &self.channel_indices
    }

    pub fn channels(&self) -> usize {
        self.channel_indices.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn resolution_m(&self) -> f64 {
        self.resolution_m
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.pixels[c * n..(c + 1) * n]
    }

    /// Mutable plane access; callers must keep the values finite.
    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.pixels[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.pixels[(c * self.height + y) * self.width + x]
    }

    /// Keeps the planes named by `keep`, in that order. Global indices are
    /// carried over unchanged.
    pub fn select_bands(&self, keep: &[usize]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(keep.len() * self.height * self.width);
        for &c in keep {
            let pos = self
                .channel_indices
                .iter()
                .position(|&x| x == c)
                .ok_or(AomError::UnknownChannel(c))?;
            pixels.extend_from_slice(self.plane(pos));
        }
        Self::new(
            self.profile.clone(),
            keep.to_vec(),
            self.height,
            self.width,
            pixels,
            self.resolution_m,
        )
    }

    /// Bilinear resampling by `factor`; output size is `round(H * factor)`.
    pub fn resample(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(AomError::invalid(format!("resample factor {factor} must be positive")));
        }
        let out_h = (self.height as f64 * factor).round() as usize;
        let out_w = (self.width as f64 * factor).round() as usize;
        if out_h == 0 || out_w == 0 {
            return Err(AomError::shape(format!(
                "resampling {}x{} by {factor} gives a degenerate {out_h}x{out_w} image",
                self.height, self.width
            )));
        }
        let mut pixels = Vec::with_capacity(self.channels() * out_h * out_w);
        for c in 0..self.channels() {
            pixels.extend(bilinear_resize(self.plane(c), self.height, self.width, out_h, out_w));
        }
        Self::new(
            self.profile.clone(),
            self.channel_indices.clone(),
            out_h,
            out_w,
            pixels,
            self.resolution_m / factor,
        )
    }

    /// Resizes to an exact `out_h x out_w` grid with the same resampler.
    pub fn resize_to(&self, out_h: usize, out_w: usize) -> Result<Self> {
        if out_h == 0 || out_w == 0 {
            return Err(AomError::shape("resize target must be non-empty"));
        }
        let mut pixels = Vec::with_capacity(self.channels() * out_h * out_w);
        for c in 0..self.channels() {
            pixels.extend(bilinear_resize(self.plane(c), self.height, self.width, out_h, out_w));
        }
        Self::new(
            self.profile.clone(),
            self.channel_indices.clone(),
            out_h,
            out_w,
            pixels,
            self.resolution_m * self.height as f64 / out_h as f64,
        )
    }
}

/// Global resampling helper matching the method on [`BandStack`].
pub fn resample_stack(stack: &BandStack, factor: f64) -> Result<BandStack> {
    stack.resample(factor)
}

pub fn select_bands(stack: &BandStack, keep: &[usize]) -> Result<BandStack> {
    stack.select_bands(keep)
}
