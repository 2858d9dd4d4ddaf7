//! Minimal reverse-mode automatic differentiation over dense matrices.
//!
//! Only the operations the encoder, decoders and heads need are provided;
//! attention, layer norm and the cross-scale InfoNCE are fused into single
//! nodes with hand-written backward passes.

mod matrix;
mod tape;

pub use matrix::{gemm_into, Matrix, Real};
pub use tape::{Gradients, Tape, Var};

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Checks d(loss)/d(inputs) against central differences, where the graph
    /// is built by `build` from leaf values.
    fn check(inputs: Vec<Matrix<f64>>, build: impl Fn(&mut Tape<f64>, &[Var]) -> Var) {
        let eval = |vals: &[Matrix<f64>]| {
            let mut tape = Tape::new();
            let vars: Vec<Var> = vals.iter().enumerate().map(|(i, m)| tape.param(i, m)).collect();
            let out = build(&mut tape, &vars);
            tape.value(out).item()
        };
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().enumerate().map(|(i, m)| tape.param(i, m)).collect();
        let out = build(&mut tape, &vars);
        let grads = tape.backward(out);
        let eps = 1e-6;
        for (i, m) in inputs.iter().enumerate() {
            let analytic = grads
                .get(vars[i])
                .cloned()
                .unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols()));
            for k in 0..m.len() {
                let mut plus = inputs.clone();
                plus[i].as_mut_slice()[k] += eps;
                let mut minus = inputs.clone();
                minus[i].as_mut_slice()[k] -= eps;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * eps);
                let a = analytic.as_slice()[k];
                let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                assert!(err < 1e-5, "input {i} entry {k}: analytic {a} vs fd {fd}");
            }
        }
    }

    #[test]
    fn matmul_add_row_gelu_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let target = random(4, 3, &mut rng);
        check(
            vec![random(4, 5, &mut rng), random(5, 3, &mut rng), random(1, 3, &mut rng)],
            |t, v| {
                let y = t.linear(v[0], v[1], v[2]);
                let y = t.gelu(y);
                let y = t.scale(y, 1.7);
                t.mse(y, &target)
            },
        );
    }

    #[test]
    fn layer_norm_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let target = random(3, 6, &mut rng);
        check(
            vec![random(3, 6, &mut rng), random(1, 6, &mut rng), random(1, 6, &mut rng)],
            |t, v| {
                let y = t.layer_norm(v[0], v[1], v[2], 1e-6);
                t.mse(y, &target)
            },
        );
    }

    #[test]
    fn attention_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let target = random(5, 4, &mut rng);
        check(vec![random(5, 12, &mut rng)], |t, v| {
            let y = t.attention(v[0], 2);
            t.mse(y, &target)
        });
    }

    #[test]
    fn scatter_gather_mean_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let target = random(2, 3, &mut rng);
        let target_mean = random(1, 3, &mut rng);
        check(vec![random(2, 3, &mut rng), random(1, 3, &mut rng)], |t, v| {
            let full = t.scatter_rows(v[0], vec![3, 0], v[1], vec![1, 2, 4]);
            let g = t.gather_rows(full, vec![4, 3]);
            let m = t.mean_rows(full);
            let a = t.mse(g, &target);
            let b = t.mse(m, &target_mean);
            t.weighted_sum(vec![(a, 0.3), (b, 2.0)])
        });
    }

    #[test]
    fn info_nce_gradients_both_variants() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for exclude_self in [false, true] {
            check(vec![random(3, 4, &mut rng)], |t, v| t.info_nce(v[0], 0.5, exclude_self));
        }
    }

    #[test]
    fn concat_rows_into_info_nce() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        check(vec![random(1, 4, &mut rng), random(2, 4, &mut rng)], |t, v| {
            let h = t.concat_rows(&[v[1], v[0]]);
            t.info_nce(h, 0.5, false)
        });
    }

    #[test]
    fn shared_parameter_accumulates() {
        let mut tape = Tape::<f64>::new();
        let w = Matrix::from_vec(1, 1, vec![3.0]);
        let a = tape.param(0, &w);
        let b = tape.param(0, &w);
        let y = tape.weighted_sum(vec![(a, 2.0), (b, 5.0)]);
        let grads = tape.backward(y);
        let total: f64 = tape.param_grads(&grads).map(|(_, g)| g.item()).sum();
        assert_eq!(total, 7.0);
    }
}
