//! Bilinear resampling with half-pixel centers.
//!
//! One convention is used everywhere: output pixel `o` samples the source at
//! `(o + 0.5) * in / out - 0.5`, clamped to `[0, in - 1]`. Image resampling,
//! positional-encoding interpolation and the kernel resize matrices all go
//! through [`bilinear_resize`], so the data path and the kernel path agree.

use num_traits::Float;

/// Tag recorded with every resize matrix built from this resampler.
pub const CONVENTION: &str = "bilinear-halfpixel-v1";

/// Source taps `(i0, i1, frac)` for each output position along one axis.
pub fn axis_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    assert!(n_in >= 1 && n_out >= 1, "degenerate resample axis");
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Resamples one row-major `h x w` plane to `out_h x out_w`.
pub fn bilinear_resize<T: Float>(src: &[T], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<T> {
    assert_eq!(src.len(), h * w, "plane length");
    let ty = axis_taps(h, out_h);
    let tx = axis_taps(w, out_w);
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(y0, y1, fy) in &ty {
        let fy = T::from(fy).unwrap();
        for &(x0, x1, fx) in &tx {
            let fx = T::from(fx).unwrap();
            let a = src[y0 * w + x0];
            let b = src[y0 * w + x1];
            let c = src[y1 * w + x0];
            let d = src[y1 * w + x1];
            let top = a * (T::one() - fx) + b * fx;
            let bottom = c * (T::one() - fx) + d * fx;
            out.push(top * (T::one() - fy) + bottom * fy);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_is_identity() {
        let src: Vec<f64> = (0..12).map(|v| v as f64 * 0.37).collect();
        assert_eq!(bilinear_resize(&src, 3, 4, 3, 4), src);
    }

    #[test]
    fn single_sample_replicates() {
        assert_eq!(bilinear_resize(&[2.5f64], 1, 1, 2, 2), vec![2.5; 4]);
    }

    #[test]
    fn two_to_four_hand_weights() {
        // Output positions map to source coordinates -0.25, 0.25, 0.75, 1.25,
        // clamped to [0, 1]: weights on the second sample 0, .25, .75, 1.
        let out = bilinear_resize(&[0.0f64, 1.0], 1, 2, 1, 4);
        assert_eq!(out, vec![0.0, 0.25, 0.75, 1.0]);
    }
}
