//! Band-stack container format.
//!
//! ```text
//! "AOMB" | version: u16 LE (=1) | header_len: u32 LE | header (UTF-8 JSON)
//!        | payload: C*H*W f32 LE, channel-major, row-major within a plane
//! ```
//!
//! Header keys: `sensor_id`, `channel_indices`, `height`, `width`, `dtype`
//! (always `"f32"`), `resolution_m`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AomError, Result};

use super::profile::SensorProfile;
use super::stack::BandStack;

pub const MAGIC: &[u8; 4] = b"AOMB";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStackHeader {
    pub sensor_id: String,
    pub channel_indices: Vec<usize>,
    pub height: usize,
    pub width: usize,
    pub dtype: String,
    pub resolution_m: f64,
}

pub fn encode_band_stack(stack: &BandStack) -> Result<Vec<u8>> {
    if let Some(i) = stack.pixels().iter().position(|v| !v.is_finite()) {
        return Err(stack.non_finite_at(i));
    }
    let header = BandStackHeader {
        sensor_id: stack.profile().sensor_id.clone(),
        channel_indices: stack.channel_indices().to_vec(),
        height: stack.height(),
        width: stack.width(),
        dtype: "f32".into(),
        resolution_m: stack.resolution_m(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(10 + json.len() + 4 * stack.pixels().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in stack.pixels() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses the header only.
pub fn decode_header(bytes: &[u8]) -> Result<(BandStackHeader, usize)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(AomError::BadMagic);
    }
    if bytes.len() < 10 {
        return Err(AomError::Header("file too short for a header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(AomError::Version {
            found: version,
            expected: VERSION,
        });
    }
    let len = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
    let end = 10 + len;
    if bytes.len() < end {
        return Err(AomError::Header("header extends past end of file".into()));
    }
    let header: BandStackHeader =
        serde_json::from_slice(&bytes[10..end]).map_err(|e| AomError::Header(e.to_string()))?;
    if header.dtype != "f32" {
        return Err(AomError::UnknownDtype(header.dtype));
    }
    Ok((header, end))
}

/// Decodes a band stack, resolving `sensor_id` against the built-in profiles.
pub fn decode_band_stack(bytes: &[u8]) -> Result<BandStack> {
    let (header, start) = decode_header(bytes)?;
    let profile = SensorProfile::builtin(&header.sensor_id)?;
    let count = header
        .channel_indices
        .len()
        .checked_mul(header.height)
        .and_then(|v| v.checked_mul(header.width))
        .ok_or_else(|| AomError::Header("shape overflows".into()))?;
    let payload = &bytes[start..];
    if payload.len() != count * 4 {
        return Err(AomError::PayloadLength {
            expected: count * 4,
            found: payload.len(),
        });
    }
    let pixels = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    BandStack::new(
        profile,
        header.channel_indices,
        header.height,
        header.width,
        pixels,
        header.resolution_m,
    )
}

/// Writes atomically (temp file in the same directory, then rename).
pub fn save_band_stack(stack: &BandStack, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_band_stack(stack)?;
    write_atomic(path.as_ref(), &bytes)
}

pub fn load_band_stack(path: impl AsRef<Path>) -> Result<BandStack> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| AomError::io(path, e))?;
    decode_band_stack(&bytes)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| AomError::invalid(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp).map_err(|e| AomError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| AomError::io(&tmp, e))?;
    f.sync_all().map_err(|e| AomError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| AomError::io(path, e))
}
