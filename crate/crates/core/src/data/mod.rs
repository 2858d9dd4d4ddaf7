//! Sensor profiles, band stacks, the on-disk container and the synthetic
//! scene generator.

mod format;
mod profile;
mod stack;
mod synthetic;

pub(crate) use format::write_atomic;
pub use format::{
    decode_band_stack, decode_header, encode_band_stack, load_band_stack, save_band_stack, BandStackHeader, MAGIC,
    VERSION,
};
pub use profile::SensorProfile;
pub use stack::{resample_stack, select_bands, BandStack};
pub use synthetic::{generate_split, generate_synthetic_scene, Split, SyntheticDatasetConfig};
