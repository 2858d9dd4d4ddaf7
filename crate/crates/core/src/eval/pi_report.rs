//! Measured response distortion of kernel resizing: pseudo-inverse vs
//! bilinear vs a Monte-Carlo least-squares fit.

use std::fmt::Write as _;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::error::{AomError, Result};
use crate::mape::{build_resize_matrix, pinv, resize_operator, BilinearResize, PiResize};
use crate::seed;

/// Relative distortion `E[(<x,K> - <Bx,K'>)^2] / E[<x,K>^2]` per kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionRow {
    pub batch: usize,
    pub pi: f64,
    pub bilinear: f64,
    pub oracle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiResizeReport {
    pub p_in: usize,
    pub p_t: usize,
    pub trials: usize,
    pub seed: u64,
    pub rows: Vec<DistortionRow>,
    pub rule: String,
    pub pass: bool,
}

pub const PI_REPORT_COLUMNS: &str = "batch,pi_distortion,bilinear_distortion,oracle_distortion";

/// Upsampling: PI distortion at or below this on every batch.
pub const EXACT_TOL: f64 = 1e-10;

fn normal_matrix(rows: usize, cols: usize, rng: &mut impl rand::Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut *rng))
}

fn relative_distortion(y_true: &Matrix<f64>, bx: &Matrix<f64>, k: &Matrix<f64>) -> f64 {
    let pred = bx.matmul(k);
    let num: f64 = y_true
        .as_slice()
        .iter()
        .zip(pred.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let den: f64 = y_true.as_slice().iter().map(|a| a * a).sum();
    num / den
}

/// Least-squares `K'` minimising `sum (<x,K> - <Bx,K'>)^2` over `x`.
pub fn least_squares_resize(bx: &Matrix<f64>, y: &Matrix<f64>) -> Result<Matrix<f64>> {
    let gram = bx.matmul_t(true, bx, false);
    let rhs = bx.matmul_t(true, y, false);
    Ok(pinv(&gram)?.matmul(&rhs))
}

/// `batches` random white kernels, each scored on `trials` held-out inputs;
/// the oracle is fitted on a separate `trials`-sample set.
pub fn pi_resize_report(p_in: usize, p_t: usize, trials: usize, batches: usize, seed: u64) -> Result<PiResizeReport> {
    if trials < 100 {
        return Err(AomError::invalid(format!("trials must be >= 100, got {trials}")));
    }
    if batches == 0 {
        return Err(AomError::invalid("at least one batch is required"));
    }
    let b = build_resize_matrix(p_in, p_t)?.entries;
    let pi = resize_operator(&PiResize, p_in, p_t)?;
    let bil = resize_operator(&BilinearResize, p_in, p_t)?;
    let n_in = p_in * p_in;
    let mut rows = Vec::with_capacity(batches);
    for batch in 0..batches {
        let mut rng = seed::rng(seed, &[0x9172, batch as u64]);
        let k = normal_matrix(n_in, 1, &mut rng);
        let x_fit = normal_matrix(trials, n_in, &mut rng);
        let x_eval = normal_matrix(trials, n_in, &mut rng);
        let bx_fit = x_fit.matmul_t(false, &b, true);
        let bx_eval = x_eval.matmul_t(false, &b, true);
        let y_eval = x_eval.matmul(&k);
        let oracle = least_squares_resize(&bx_fit, &x_fit.matmul(&k))?;
        rows.push(DistortionRow {
            batch,
            pi: relative_distortion(&y_eval, &bx_eval, &pi.matmul(&k)),
            bilinear: relative_distortion(&y_eval, &bx_eval, &bil.matmul(&k)),
            oracle: relative_distortion(&y_eval, &bx_eval, &oracle),
        });
    }
    let (rule, pass) = if p_t >= p_in {
        (
            format!("pi_distortion <= {EXACT_TOL:e} on every batch"),
            rows.iter().all(|r| r.pi <= EXACT_TOL),
        )
    } else {
        (
            "pi_distortion <= bilinear_distortion on every batch".to_string(),
            rows.iter().all(|r| r.pi <= r.bilinear),
        )
    };
    Ok(PiResizeReport {
        p_in,
        p_t,
        trials,
        seed,
        rows,
        rule,
        pass,
    })
}

impl PiResizeReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{PI_REPORT_COLUMNS}\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{:.6e},{:.6e},{:.6e}", r.batch, r.pi, r.bilinear, r.oracle);
        }
        let _ = writeln!(out, "# p_in={}", self.p_in);
        let _ = writeln!(out, "# p_t={}", self.p_t);
        let _ = writeln!(out, "# trials={}", self.trials);
        let _ = writeln!(out, "# rule={}", self.rule);
        let _ = writeln!(out, "# pass={}", self.pass);
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| AomError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upsampling_is_exact() {
        let r = pi_resize_report(4, 8, 200, 3, 0).unwrap();
        assert!(r.pass, "{:?}", r.rows);
        assert!(r.rows.iter().all(|x| x.pi < 1e-20));
    }

    #[test]
    fn downsampling_pi_beats_bilinear() {
        let r = pi_resize_report(8, 4, 2000, 5, 1).unwrap();
        assert!(r.pass, "{:?}", r.rows);
        for row in &r.rows {
            // the fitted oracle and PI agree up to sampling noise
            assert!((row.oracle - row.pi).abs() < 0.05 * row.pi.max(1e-12), "{row:?}");
        }
    }

    #[test]
    fn identity_has_no_distortion() {
        let r = pi_resize_report(4, 4, 100, 2, 2).unwrap();
        assert!(r
            .rows
            .iter()
            .all(|x| x.pi < 1e-20 && x.bilinear < 1e-20 && x.oracle < 1e-20));
    }

    #[test]
    fn few_trials_rejected() {
        assert!(pi_resize_report(8, 4, 99, 1, 0).is_err());
        let csv = pi_resize_report(8, 4, 100, 2, 0).unwrap().to_csv();
        assert!(csv.starts_with(PI_REPORT_COLUMNS) && csv.contains("# pass="));
    }
}
