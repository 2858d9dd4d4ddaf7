use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Real};
use crate::error::{AomError, Result};

use super::embed::TokenGrid;
use super::encoding::{ChannelEncoding, SpatialGrid};

/// Where a sequence row came from: global channel index and grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenIndex {
    pub channel: usize,
    pub row: usize,
    pub col: usize,
}

/// Flattened `L x D` token sequence, `L = C * N_H * N_W`, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence<T> {
    pub tokens: Matrix<T>,
    pub index_map: Vec<TokenIndex>,
    pub patch_size: usize,
    pub grid_shape: (usize, usize),
}

impl<T: Real> TokenSequence<T> {
    pub fn len(&self) -> usize {
        self.tokens.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows() == 0
    }

    pub fn embed_dim(&self) -> usize {
        self.tokens.cols()
    }

    pub fn channels(&self) -> usize {
        let (nh, nw) = self.grid_shape;
        self.len() / (nh * nw)
    }

    pub fn tokens_per_channel(&self) -> usize {
        self.grid_shape.0 * self.grid_shape.1
    }
}

/// Row order for `channels` blocks of an `n_h x n_w` grid.
pub fn index_map(channel_indices: &[usize], grid_shape: (usize, usize)) -> Vec<TokenIndex> {
    let (nh, nw) = grid_shape;
    let mut out = Vec::with_capacity(channel_indices.len() * nh * nw);
    for &channel in channel_indices {
        for row in 0..nh {
            for col in 0..nw {
                out.push(TokenIndex { channel, row, col });
            }
        }
    }
    out
}

/// Per-row sum of channel and spatial encodings.
pub fn encoding_rows<T: Real>(
    index_map: &[TokenIndex],
    ch_enc: &ChannelEncoding,
    sp_enc: &SpatialGrid,
) -> Result<Matrix<T>> {
    let d = ch_enc.dim();
    if sp_enc.dim() != d {
        return Err(AomError::shape(format!(
            "spatial encoding width {} != channel encoding width {d}",
            sp_enc.dim()
        )));
    }
    let (nh, nw) = sp_enc.shape();
    let mut out = Matrix::zeros(index_map.len(), d);
    let mut cached: Option<(usize, Vec<f64>)> = None;
    for (i, t) in index_map.iter().enumerate() {
        if t.row >= nh || t.col >= nw {
            return Err(AomError::shape(format!(
                "token at ({}, {}) outside {nh}x{nw} spatial grid",
                t.row, t.col
            )));
        }
        if cached.as_ref().map(|(c, _)| *c) != Some(t.channel) {
            cached = Some((t.channel, ch_enc.lookup(t.channel)?));
        }
        let ch = &cached.as_ref().unwrap().1;
        let sp = sp_enc.at(t.row, t.col);
        for (j, o) in out.row_mut(i).iter_mut().enumerate() {
            *o = T::from_f64_lossy(ch[j] + sp[j]);
        }
    }
    Ok(out)
}

/// Adds channel and spatial encodings to each token and flattens the grid.
pub fn assemble_tokens<T: Real>(
    grid: &TokenGrid<T>,
    ch_enc: &ChannelEncoding,
    sp_enc: &SpatialGrid,
) -> Result<TokenSequence<T>> {
    let shape = grid.grid_shape();
    if sp_enc.shape() != shape || sp_enc.dim() != grid.embed_dim() || ch_enc.dim() != grid.embed_dim() {
        return Err(AomError::shape(format!(
            "encodings ({:?} x {}, channel width {}) do not match token grid {:?} x {}",
            sp_enc.shape(),
            sp_enc.dim(),
            ch_enc.dim(),
            shape,
            grid.embed_dim()
        )));
    }
    let map = index_map(grid.channel_indices(), shape);
    let enc = encoding_rows::<T>(&map, ch_enc, sp_enc)?;
    let mut tokens = grid.tokens().clone();
    tokens.add_assign(&enc);
    Ok(TokenSequence {
        tokens,
        index_map: map,
        patch_size: grid.patch_size(),
        grid_shape: shape,
    })
}
