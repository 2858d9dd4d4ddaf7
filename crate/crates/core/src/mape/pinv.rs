use nalgebra::DMatrix;

use crate::autodiff::Matrix;
use crate::error::{AomError, Result};

/// Singular values below `RCOND * sigma_max` are treated as zero.
pub const RCOND: f64 = 1e-10;

fn to_na(m: &Matrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn from_na(m: &DMatrix<f64>) -> Matrix<f64> {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Moore-Penrose pseudo-inverse via SVD.
pub fn pinv(m: &Matrix<f64>) -> Result<Matrix<f64>> {
    if m.is_empty() {
        return Ok(Matrix::zeros(m.cols(), m.rows()));
    }
    if !m.all_finite() {
        return Err(AomError::Numerical("pseudo-inverse of non-finite matrix".into()));
    }
    let svd = to_na(m).svd(true, true);
    let smax = svd.singular_values.max();
    let p = svd
        .pseudo_inverse(RCOND * smax)
        .map_err(|e| AomError::Numerical(format!("pseudo-inverse failed: {e}")))?;
    Ok(from_na(&p))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::mape::build_resize_matrix;

    fn rel(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
        let mut d = a.clone();
        d.scale_assign(-1.0);
        d.add_assign(b);
        d.frobenius_norm() / b.frobenius_norm()
    }

    #[test]
    fn penrose_conditions_on_resize_transposes() {
        for (pi, po) in [(4, 8), (8, 4), (8, 16), (6, 4), (4, 6), (8, 6)] {
            let b = build_resize_matrix(pi, po).unwrap().entries.transpose();
            let bp = pinv(&b).unwrap();
            assert!(rel(&b.matmul(&bp).matmul(&b), &b) < 1e-8, "{pi}->{po}");
            assert!(rel(&bp.matmul(&b).matmul(&bp), &bp) < 1e-8, "{pi}->{po}");
        }
    }

    #[test]
    fn inverse_of_invertible_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = Matrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
        for i in 0..5 {
            a.set(i, i, a.get(i, i) + 4.0);
        }
        let p = pinv(&a).unwrap();
        assert!(rel(&a.matmul(&p), &Matrix::identity(5)) < 1e-12);
    }

    #[test]
    fn rank_deficient_matrix() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 2.0, 4.0]);
        let p = pinv(&a).unwrap();
        // pinv of u v^T with u=v=(1,2): (1/25) * a
        for (x, y) in p.as_slice().iter().zip(a.as_slice()) {
            assert!((x - y / 25.0).abs() < 1e-12);
        }
    }
}
