//! Channel (spectral) and spatial positional encodings.

use std::sync::Arc;

use crate::autodiff::Matrix;
use crate::data::SensorProfile;
use crate::error::{AomError, Result};
use crate::registry::Registry;
use crate::resample::bilinear_resize;

/// Interleaved transformer sinusoid: `[sin(p/10000^(2k/D)), cos(p/10000^(2k/D))]`.
pub fn sinusoid(position: f64, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(AomError::invalid(format!("encoding dimension {dim} must be even")));
    }
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim / 2 {
        let freq = 10000f64.powf(2.0 * k as f64 / dim as f64);
        let arg = position / freq;
        out.push(arg.sin());
        out.push(arg.cos());
    }
    Ok(out)
}

pub fn channel_index_encoding(index: usize, dim: usize) -> Result<Vec<f64>> {
    sinusoid(index as f64, dim)
}

/// Sinusoid of `lambda / 100`, so Sentinel-2 wavelengths span roughly 4..22.
pub fn wavelength_encoding(lambda_nm: f64, dim: usize) -> Result<Vec<f64>> {
    if !(lambda_nm.is_finite() && lambda_nm > 0.0) {
        return Err(AomError::invalid(format!("wavelength {lambda_nm} must be positive")));
    }
    sinusoid(lambda_nm / 100.0, dim)
}

/// How a band's identity becomes a vector.
pub trait SpectralEncoding: Send + Sync {
    fn name(&self) -> &'static str;

    fn encode(&self, channel_index: usize, profile: &SensorProfile, dim: usize) -> Result<Vec<f64>>;
}

/// Encodes the global channel index.
#[derive(Debug, Default, Clone, Copy)]
pub struct IndexEncoding;

impl SpectralEncoding for IndexEncoding {
    fn name(&self) -> &'static str {
        "index"
    }

    fn encode(&self, channel_index: usize, _profile: &SensorProfile, dim: usize) -> Result<Vec<f64>> {
        channel_index_encoding(channel_index, dim)
    }
}

/// Encodes the band's central wavelength from the sensor profile.
#[derive(Debug, Default, Clone, Copy)]
pub struct WavelengthEncoding;

impl SpectralEncoding for WavelengthEncoding {
    fn name(&self) -> &'static str {
        "wavelength"
    }

    fn encode(&self, channel_index: usize, profile: &SensorProfile, dim: usize) -> Result<Vec<f64>> {
        wavelength_encoding(profile.wavelength_nm(channel_index)?, dim)
    }
}

pub fn spectral_encodings() -> Registry<dyn SpectralEncoding> {
    let mut r: Registry<dyn SpectralEncoding> = Registry::new("spectral encoding");
    r.register("index", || Box::new(IndexEncoding));
    r.register("wavelength", || Box::new(WavelengthEncoding));
    r
}

/// A spectral encoding bound to a sensor profile and width.
pub struct ChannelEncoding {
    strategy: Box<dyn SpectralEncoding>,
    profile: Arc<SensorProfile>,
    dim: usize,
}

impl ChannelEncoding {
    pub fn new(strategy: Box<dyn SpectralEncoding>, profile: Arc<SensorProfile>, dim: usize) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(AomError::invalid(format!("encoding dimension {dim} must be even")));
        }
        Ok(Self { strategy, profile, dim })
    }

    pub fn by_name(name: &str, profile: Arc<SensorProfile>, dim: usize) -> Result<Self> {
        Self::new(spectral_encodings().create(name)?, profile, dim)
    }

    pub fn index(profile: Arc<SensorProfile>, dim: usize) -> Result<Self> {
        Self::new(Box::new(IndexEncoding), profile, dim)
    }

    pub fn mode(&self) -> &'static str {
        self.strategy.name()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn profile(&self) -> &Arc<SensorProfile> {
        &self.profile
    }

    pub fn lookup(&self, channel_index: usize) -> Result<Vec<f64>> {
        self.strategy.encode(channel_index, &self.profile, self.dim)
    }
}

impl std::fmt::Debug for ChannelEncoding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChannelEncoding")
            .field("mode", &self.mode())
            .field("sensor", &self.profile.sensor_id)
            .field("dim", &self.dim)
            .finish()
    }
}

/// Fixed 2-D sin-cos grid of shape `n_h x n_w x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    n_h: usize,
    n_w: usize,
    values: Matrix<f64>,
}

impl SpatialGrid {
    pub fn from_values(n_h: usize, n_w: usize, values: Matrix<f64>) -> Result<Self> {
        if n_h == 0 || n_w == 0 || values.rows() != n_h * n_w {
            return Err(AomError::shape(format!(
                "spatial grid {n_h}x{n_w} needs {} rows, got {}",
                n_h * n_w,
                values.rows()
            )));
        }
        Ok(Self { n_h, n_w, values })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_h, self.n_w)
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn at(&self, row: usize, col: usize) -> &[f64] {
        self.values.row(row * self.n_w + col)
    }

    pub fn values(&self) -> &Matrix<f64> {
        &self.values
    }
}

/// First half of each vector encodes the row, second half the column.
pub fn spatial_encoding(n_h: usize, n_w: usize, dim: usize) -> Result<SpatialGrid> {
    if dim == 0 || !dim.is_multiple_of(4) {
        return Err(AomError::invalid(format!(
            "spatial encoding dimension {dim} must be divisible by 4"
        )));
    }
    if n_h == 0 || n_w == 0 {
        return Err(AomError::shape("spatial grid must be non-empty"));
    }
    let half = dim / 2;
    let rows: Vec<Vec<f64>> = (0..n_h).map(|r| sinusoid(r as f64, half)).collect::<Result<_>>()?;
    let cols: Vec<Vec<f64>> = (0..n_w).map(|q| sinusoid(q as f64, half)).collect::<Result<_>>()?;
    let values = Matrix::from_fn(n_h * n_w, dim, |i, d| {
        let (r, q) = (i / n_w, i % n_w);
        if d < half {
            rows[r][d]
        } else {
            cols[q][d - half]
        }
    });
    SpatialGrid::from_values(n_h, n_w, values)
}

/// Bilinear (half-pixel) resampling of every encoding dimension.
pub fn interpolate_spatial_encoding(grid: &SpatialGrid, new_shape: (usize, usize)) -> Result<SpatialGrid> {
    let (nh, nw) = new_shape;
    if nh == 0 || nw == 0 {
        return Err(AomError::shape("interpolation target must be non-empty"));
    }
    if (nh, nw) == grid.shape() {
        return Ok(grid.clone());
    }
    let dim = grid.dim();
    let mut values = Matrix::zeros(nh * nw, dim);
    for d in 0..dim {
        let plane: Vec<f64> = (0..grid.n_h * grid.n_w).map(|i| grid.values.get(i, d)).collect();
        let out = bilinear_resize(&plane, grid.n_h, grid.n_w, nh, nw);
        for (i, v) in out.into_iter().enumerate() {
            values.set(i, d, v);
        }
    }
    SpatialGrid::from_values(nh, nw, values)
}
