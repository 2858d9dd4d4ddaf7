//! Spectrum-independent tokenizer: one shared single-channel patch kernel
//! applied to every band, a spectral encoding per band, a 2-D spatial
//! encoding per cell, and channel-major concatenation.

mod embed;
mod encoding;
mod kernel;
mod sequence;

pub(crate) use embed::check_divisible;
pub use embed::{channel_patch_embed, extract_patches, TokenGrid};
pub use encoding::{
    channel_index_encoding, interpolate_spatial_encoding, sinusoid, spatial_encoding, spectral_encodings,
    wavelength_encoding, ChannelEncoding, IndexEncoding, SpatialGrid, SpectralEncoding, WavelengthEncoding,
};
pub use kernel::PatchKernel;
pub use sequence::{assemble_tokens, encoding_rows, index_map, TokenIndex, TokenSequence};

use crate::autodiff::Real;
use crate::data::BandStack;
use crate::error::Result;

/// Full tokenizer with a single kernel: embed, encode, flatten.
pub fn tokenize<T: Real>(
    stack: &BandStack,
    kernel: &PatchKernel<T>,
    ch_enc: &ChannelEncoding,
) -> Result<TokenSequence<T>> {
    let grid = channel_patch_embed(stack, kernel)?;
    let (nh, nw) = grid.grid_shape();
    let sp = spatial_encoding(nh, nw, kernel.embed_dim())?;
    assemble_tokens(&grid, ch_enc, &sp)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::autodiff::Matrix;
    use crate::data::SensorProfile;

    fn random_stack(rng: &mut ChaCha8Rng, h: usize, w: usize) -> BandStack {
        let p = Arc::new(SensorProfile::sentinel2());
        let px = (0..13 * h * w).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        BandStack::new(p, (0..13).collect(), h, w, px, 10.0).unwrap()
    }

    fn random_kernel(rng: &mut ChaCha8Rng, p: usize, d: usize) -> PatchKernel<f64> {
        let w = Matrix::from_fn(p * p, d, |_, _| rng.gen_range(-0.5..0.5));
        let b = (0..d).map(|_| rng.gen_range(-0.1..0.1)).collect();
        PatchKernel::new(p, w, b).unwrap()
    }

    #[test]
    fn grid_shape_for_sentinel2() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = random_stack(&mut rng, 64, 64);
        let k = random_kernel(&mut rng, 16, 8);
        let g = channel_patch_embed(&s, &k).unwrap();
        assert_eq!(g.grid_shape(), (4, 4));
        assert_eq!(g.tokens().rows(), 208);
        assert_eq!(g.tokens().cols(), 8);
    }

    #[test]
    fn zero_input_gives_bias_tokens() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = BandStack::zeros(Arc::new(SensorProfile::sentinel2()), 8, 8).unwrap();
        let k = random_kernel(&mut rng, 4, 6);
        let g = channel_patch_embed(&s, &k).unwrap();
        for i in 0..g.tokens().rows() {
            assert_eq!(g.tokens().row(i), k.bias());
        }
    }

    #[test]
    fn single_band_matches_slice_of_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_stack(&mut rng, 8, 8);
        let k = random_kernel(&mut rng, 4, 6);
        let full = channel_patch_embed(&s, &k).unwrap();
        let one = channel_patch_embed(&s.select_bands(&[4]).unwrap(), &k).unwrap();
        assert_eq!(one.tokens(), &full.block(4));
    }

    #[test]
    fn token_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_stack(&mut rng, 8, 12);
        let k = random_kernel(&mut rng, 4, 3);
        let g = channel_patch_embed(&s, &k).unwrap();
        let (c, r, q) = (5, 1, 2);
        for d in 0..3 {
            let mut want = k.bias()[d];
            for py in 0..4 {
                for px in 0..4 {
                    want += s.get(c, r * 4 + py, q * 4 + px) as f64 * k.weights().get(py * 4 + px, d);
                }
            }
            assert!((g.token(c, r, q)[d] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn non_divisible_size_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_stack(&mut rng, 10, 8);
        let k = random_kernel(&mut rng, 4, 4);
        let err = channel_patch_embed(&s, &k).unwrap_err().to_string();
        assert!(err.contains("10x8") && err.contains('4'), "{err}");
    }

    #[test]
    fn zero_grid_rows_equal_channel_encoding() {
        let s = BandStack::zeros(Arc::new(SensorProfile::sentinel2()), 8, 8).unwrap();
        let k = PatchKernel::new(4, Matrix::<f64>::zeros(16, 8), vec![0.0; 8]).unwrap();
        let grid = channel_patch_embed(&s, &k).unwrap();
        let ch = ChannelEncoding::index(s.profile().clone(), 8).unwrap();
        let sp = SpatialGrid::from_values(2, 2, Matrix::zeros(4, 8)).unwrap();
        let seq = assemble_tokens(&grid, &ch, &sp).unwrap();
        for (i, t) in seq.index_map.iter().enumerate() {
            assert_eq!(
                seq.tokens.row(i),
                channel_index_encoding(t.channel, 8).unwrap().as_slice()
            );
        }
    }

    #[test]
    fn assemble_rejects_mismatched_spatial_grid() {
        let s = BandStack::zeros(Arc::new(SensorProfile::sentinel2()), 8, 8).unwrap();
        let k = PatchKernel::new(4, Matrix::<f64>::zeros(16, 8), vec![0.0; 8]).unwrap();
        let grid = channel_patch_embed(&s, &k).unwrap();
        let ch = ChannelEncoding::index(s.profile().clone(), 8).unwrap();
        let sp = spatial_encoding(3, 2, 8).unwrap();
        assert!(assemble_tokens(&grid, &ch, &sp).is_err());
    }

    #[test]
    fn subset_rows_equal_full_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_stack(&mut rng, 8, 8);
        let k = random_kernel(&mut rng, 4, 8);
        let ch = ChannelEncoding::index(s.profile().clone(), 8).unwrap();
        let full = tokenize(&s, &k, &ch).unwrap();
        let sub = tokenize(&s.select_bands(&[3, 2, 1]).unwrap(), &k, &ch).unwrap();
        for (b, &c) in [3usize, 2, 1].iter().enumerate() {
            for t in 0..4 {
                assert_eq!(sub.tokens.row(b * 4 + t), full.tokens.row(c * 4 + t));
                assert_eq!(sub.index_map[b * 4 + t], full.index_map[c * 4 + t]);
            }
        }
    }

    #[test]
    fn encoding_mode_changes_values_not_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = random_stack(&mut rng, 8, 8);
        let k = random_kernel(&mut rng, 4, 8);
        let a = tokenize(
            &s,
            &k,
            &ChannelEncoding::by_name("index", s.profile().clone(), 8).unwrap(),
        )
        .unwrap();
        let b = tokenize(
            &s,
            &k,
            &ChannelEncoding::by_name("wavelength", s.profile().clone(), 8).unwrap(),
        )
        .unwrap();
        assert_eq!(a.tokens.shape(), b.tokens.shape());
        assert_ne!(a.tokens, b.tokens);
    }
}
