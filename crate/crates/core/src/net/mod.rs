//! The trainable network: kernel bank, shared transformer encoder, one
//! decoder and projection head per scale, and checkpoint files.

mod checkpoint;
mod config;
mod model;
mod params;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CKPT_MAGIC, CKPT_VERSION,
};
pub use config::{DecoderConfig, EncoderConfig, ModelConfig};
pub use model::{mean_rows, AomModel, Graph, ScaleInput};
pub use params::{trunc_normal, ParamStore};
