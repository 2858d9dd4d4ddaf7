//! Per-channel token-norm heatmaps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Real};
use crate::data::BandStack;
use crate::error::{AomError, Result};
use crate::mape::{kernel_resizers, select_kernel_with};
use crate::net::AomModel;
use crate::sitok::channel_patch_embed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureStage {
    /// Convolution tokens before any encoding is added.
    Tokenizer,
    /// Encoder outputs of a full unmasked forward.
    Encoder,
}

/// `C` heatmaps of `N_H x N_W` token L2 norms, channel-major.
pub fn channel_feature_maps<T: Real>(
    model: &AomModel<T>,
    stack: &BandStack,
    patch_size: usize,
    stage: FeatureStage,
) -> Result<Vec<Matrix<f64>>> {
    let tokens = match stage {
        FeatureStage::Tokenizer => {
            let bank = model.kernel_bank()?;
            let resizer = kernel_resizers().create(&model.config().resizer)?;
            let (_, kernel) = select_kernel_with(&bank, patch_size, resizer.as_ref())?;
            channel_patch_embed(stack, &kernel)?.tokens().clone()
        }
        FeatureStage::Encoder => model.encode_all(&model.prepare(stack, patch_size)?)?,
    };
    let (nh, nw) = (stack.height() / patch_size, stack.width() / patch_size);
    let n = nh * nw;
    Ok((0..stack.channels())
        .map(|c| {
            Matrix::from_fn(nh, nw, |r, q| {
                tokens
                    .row(c * n + r * nw + q)
                    .iter()
                    .map(|v| v.as_f64() * v.as_f64())
                    .sum::<f64>()
                    .sqrt()
            })
        })
        .collect())
}

fn heatmap_csv(m: &Matrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.rows() {
        let cells: Vec<String> = m.row(r).iter().map(|v| format!("{v:.9e}")).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

/// Writes `channel_<pos>_band<index>.csv` per channel into `out_dir`.
pub fn export_channel_features<T: Real>(
    model: &AomModel<T>,
    stack: &BandStack,
    patch_size: usize,
    stage: FeatureStage,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| AomError::io(dir, e))?;
    let maps = channel_feature_maps(model, stack, patch_size, stage)?;
    let mut paths = Vec::with_capacity(maps.len());
    for (pos, (map, &band)) in maps.iter().zip(stack.channel_indices()).enumerate() {
        let path = dir.join(format!("channel_{pos:02}_band{band:02}.csv"));
        std::fs::write(&path, heatmap_csv(map)).map_err(|e| AomError::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
