use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{AomError, Result};

/// Declared band layout of an optical instrument.
///
/// `channel_indices` are *global* spectral indices shared across sensors
/// (Sentinel-2 band order), so a Landsat-8 or RGB image can reuse the channel
/// encodings learned for the matching Sentinel-2 bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorProfile {
    pub sensor_id: String,
    pub band_count: usize,
    pub channel_indices: Vec<usize>,
    pub band_names: Vec<String>,
    pub central_wavelengths_nm: Vec<f64>,
    pub nominal_gsd_m: Vec<f64>,
}

impl SensorProfile {
    pub fn new(
        sensor_id: &str,
        channel_indices: Vec<usize>,
        band_names: Vec<&str>,
        central_wavelengths_nm: Vec<f64>,
        nominal_gsd_m: Vec<f64>,
    ) -> Result<Self> {
        let p = Self {
            sensor_id: sensor_id.to_string(),
            band_count: channel_indices.len(),
            channel_indices,
            band_names: band_names.into_iter().map(String::from).collect(),
            central_wavelengths_nm,
            nominal_gsd_m,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.band_count;
        if self.channel_indices.len() != n
            || self.band_names.len() != n
            || self.central_wavelengths_nm.len() != n
            || self.nominal_gsd_m.len() != n
        {
            return Err(AomError::invalid(format!(
                "profile {}: per-band lists must all have length {n}",
                self.sensor_id
            )));
        }
        let mut seen = self.channel_indices.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != n {
            return Err(AomError::invalid(format!(
                "profile {}: channel indices are not distinct",
                self.sensor_id
            )));
        }
        if self
            .central_wavelengths_nm
            .iter()
            .chain(&self.nominal_gsd_m)
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(AomError::invalid(format!(
                "profile {}: wavelengths and GSDs must be positive",
                self.sensor_id
            )));
        }
        Ok(())
    }

    /// Position of a global channel index within this profile.
    pub fn position(&self, channel_index: usize) -> Option<usize> {
        self.channel_indices.iter().position(|&c| c == channel_index)
    }

    pub fn contains(&self, channel_index: usize) -> bool {
        self.position(channel_index).is_some()
    }

    pub fn wavelength_nm(&self, channel_index: usize) -> Result<f64> {
        self.position(channel_index)
            .map(|p| self.central_wavelengths_nm[p])
            .ok_or(AomError::UnknownChannel(channel_index))
    }

    /// Sentinel-2 MSI, 13 bands indexed 0..=12.
    pub fn sentinel2() -> Self {
        Self::new(
            "sentinel2",
            (0..13).collect(),
            vec![
                "B1", "B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B9", "B10", "B11", "B12",
            ],
            vec![
                443.0, 490.0, 560.0, 665.0, 705.0, 740.0, 783.0, 842.0, 865.0, 945.0, 1375.0, 1610.0, 2190.0,
            ],
            vec![
                60.0, 10.0, 10.0, 10.0, 20.0, 20.0, 20.0, 10.0, 20.0, 60.0, 60.0, 20.0, 20.0,
            ],
        )
        .expect("built-in profile is valid")
    }

    /// Landsat-8 OLI reflective bands mapped onto their Sentinel-2 counterparts.
    pub fn landsat8() -> Self {
        Self::new(
            "landsat8",
            vec![0, 1, 2, 3, 8, 10, 11, 12],
            vec!["B1", "B2", "B3", "B4", "B5", "B9", "B6", "B7"],
            vec![443.0, 482.0, 562.0, 655.0, 865.0, 1373.0, 1609.0, 2201.0],
            vec![30.0; 8],
        )
        .expect("built-in profile is valid")
    }

    /// Plain RGB camera; red, green and blue reuse the Sentinel-2 B4/B3/B2 indices.
    pub fn rgb() -> Self {
        Self::new(
            "rgb",
            vec![3, 2, 1],
            vec!["R", "G", "B"],
            vec![665.0, 560.0, 490.0],
            vec![1.0; 3],
        )
        .expect("built-in profile is valid")
    }

    pub fn builtin(sensor_id: &str) -> Result<Arc<Self>> {
        match sensor_id {
            "sentinel2" => Ok(Arc::new(Self::sentinel2())),
            "landsat8" => Ok(Arc::new(Self::landsat8())),
            "rgb" => Ok(Arc::new(Self::rgb())),
            other => Err(AomError::invalid(format!("unknown sensor profile {other:?}"))),
        }
    }
}
