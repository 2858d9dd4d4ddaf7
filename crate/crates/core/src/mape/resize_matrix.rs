use crate::autodiff::Matrix;
use crate::error::{AomError, Result};
use crate::resample::{bilinear_resize, CONVENTION};

/// Linear map from a vectorised `P_in x P_in` patch to its bilinear
/// resampling at `P_out x P_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResizeMatrix {
    pub entries: Matrix<f64>,
    pub p_in: usize,
    pub p_out: usize,
    pub convention: &'static str,
}

impl ResizeMatrix {
    pub fn ratio(&self) -> f64 {
        self.p_out as f64 / self.p_in as f64
    }

    /// `B x` for a row-major patch `x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let b = &self.entries;
        (0..b.rows())
            .map(|i| b.row(i).iter().zip(x).map(|(a, v)| a * v).sum())
            .collect()
    }
}

/// Column `j` is the resampler applied to the `j`-th basis image.
pub fn build_resize_matrix(p_in: usize, p_out: usize) -> Result<ResizeMatrix> {
    if p_in == 0 || p_out == 0 {
        return Err(AomError::invalid(format!(
            "patch sizes must be >= 1, got {p_in} -> {p_out}"
        )));
    }
    let (n_in, n_out) = (p_in * p_in, p_out * p_out);
    let mut entries = Matrix::zeros(n_out, n_in);
    let mut basis = vec![0.0f64; n_in];
    for j in 0..n_in {
        basis[j] = 1.0;
        let col = bilinear_resize(&basis, p_in, p_in, p_out, p_out);
        for (i, v) in col.into_iter().enumerate() {
            entries.set(i, j, v);
        }
        basis[j] = 0.0;
    }
    Ok(ResizeMatrix {
        entries,
        p_in,
        p_out,
        convention: CONVENTION,
    })
}
