//! Dense f64 tensors with reverse-mode differentiation.
//!
//! Just enough machinery for small MLPs, softmax attention, and
//! policy-gradient losses: a [`Tensor`] matrix type, a per-pass [`Tape`],
//! a named [`ParamStore`], [`Adam`], and a finite-difference gradient
//! checker that every loss in the crate is tested against.

mod adam;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::Adam;
pub use gradcheck::finite_diff_check;
pub use params::{ParamId, ParamStore};
pub use tape::{softmax_rows_value, NodeId, Tape};
pub use tensor::Tensor;

#[allow(unused_imports)]
pub(crate) use tape::{sigmoid, softplus};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_zero_input_yields_bias_rows() {
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
        let b = store.insert("b", Tensor::row(&[0.5, -0.5])).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(4, 3));
        let (w, b) = (tape.param(&store, w), tape.param(&store, b));
        let y = tape.affine(x, w, b);
        for r in 0..4 {
            assert_eq!(tape.value(y).row_slice(r), &[0.5, -0.5]);
        }
    }

    #[test]
    fn affine_identity_passthrough() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(3.0));
        let w = tape.constant(Tensor::scalar(1.0));
        let b = tape.constant(Tensor::scalar(0.0));
        let y = tape.affine(x, w, b);
        assert_eq!(tape.value(y).item(), 3.0);
    }

    #[test]
    fn affine_matches_triple_loop_oracle() {
        // Fixed pseudo-random case, checked against a hand-rolled product.
        let xv = Tensor::from_vec(2, 3, vec![0.7, -1.3, 0.2, 2.4, 0.9, -0.5]);
        let wv = Tensor::from_vec(3, 2, vec![1.1, -0.4, 0.3, 0.8, -2.0, 0.6]);
        let bv = Tensor::row(&[0.25, -0.75]);
        let mut want = Tensor::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = bv.get(0, j);
                for k in 0..3 {
                    acc += xv.get(i, k) * wv.get(k, j);
                }
                want.set(i, j, acc);
            }
        }
        let mut tape = Tape::new();
        let x = tape.constant(xv);
        let w = tape.constant(wv);
        let b = tape.constant(bv);
        let y = tape.affine(x, w, b);
        for (a, e) in tape.value(y).data().iter().zip(want.data()) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_uniform_row() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(&[0.0, 0.0, 0.0]));
        let p = tape.softmax_rows(x);
        for &v in tape.value(p).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_two_class_reduces_to_logistic() {
        let (c, k) = (5.3, 1.7);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(&[c, c + k]));
        let p = tape.softmax_rows(x);
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        assert!((tape.value(p).get(0, 0) - sig(-k)).abs() < 1e-12);
        assert!((tape.value(p).get(0, 1) - sig(k)).abs() < 1e-12);
    }

    #[test]
    fn softmax_matches_direct_exp_sum_oracle() {
        let logits = Tensor::from_vec(
            3,
            4,
            vec![0.3, -1.2, 2.2, 0.0, -0.7, 0.4, 1.9, -2.5, 3.3, 3.1, -0.2, 0.8],
        );
        let mut tape = Tape::new();
        let x = tape.constant(logits.clone());
        let p = tape.softmax_rows(x);
        for r in 0..3 {
            let direct: Vec<f64> = {
                let exps: Vec<f64> = logits.row_slice(r).iter().map(|v| v.exp()).collect();
                let z: f64 = exps.iter().sum();
                exps.iter().map(|e| e / z).collect()
            };
            for c in 0..4 {
                assert!((tape.value(p).get(r, c) - direct[c]).abs() < 1e-9);
            }
            let sum: f64 = tape.value(p).row_slice(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_of_square_at_three_is_six() {
        let mut store = ParamStore::new();
        let id = store.insert("theta", Tensor::scalar(3.0)).unwrap();
        let mut tape = Tape::new();
        let theta = tape.param(&store, id);
        let loss = tape.square(theta);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(id).item(), 6.0);
    }

    #[test]
    fn disconnected_parameter_gets_zero_gradient() {
        let mut store = ParamStore::new();
        let used = store.insert("used", Tensor::scalar(2.0)).unwrap();
        let unused = store.insert("unused", Tensor::scalar(5.0)).unwrap();
        let mut tape = Tape::new();
        let x = tape.param(&store, used);
        let _ = tape.param(&store, unused);
        let loss = tape.square(x);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(unused).item(), 0.0);
        assert_eq!(store.grad(used).item(), 4.0);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut store = ParamStore::new();
        let id = store.insert("w", Tensor::row(&[1.0, 2.0])).unwrap();
        let mut tape = Tape::new();
        let w = tape.param(&store, id);
        let y = tape.square(w);
        assert!(tape.backward(y, &mut store).is_err());
    }

    #[test]
    fn two_layer_tanh_mlp_passes_gradient_check() {
        // Small deterministic MLP: 3 -> 4 -> 1, tanh activations.
        let mut store = ParamStore::new();
        let mk = |vals: &[f64]| vals.to_vec();
        let w1 = store
            .insert(
                "w1",
                Tensor::from_vec(3, 4, mk(&[0.2, -0.5, 0.1, 0.7, 0.3, 0.9, -0.4, 0.05, -0.6, 0.25, 0.8, -0.15])),
            )
            .unwrap();
        let b1 = store.insert("b1", Tensor::row(&[0.1, -0.2, 0.05, 0.3])).unwrap();
        let w2 = store.insert("w2", Tensor::from_vec(4, 1, mk(&[0.5, -0.7, 0.2, 0.9]))).unwrap();
        let b2 = store.insert("b2", Tensor::row(&[0.0])).unwrap();

        let err = finite_diff_check(
            |tape, params| {
                let x = tape.constant(Tensor::from_vec(2, 3, vec![0.4, -1.1, 0.6, 1.2, 0.0, -0.3]));
                let (w1, b1) = (tape.param(params, w1), tape.param(params, b1));
                let (w2, b2) = (tape.param(params, w2), tape.param(params, b2));
                let h = tape.affine(x, w1, b1);
                let h = tape.tanh(h);
                let y = tape.affine(h, w2, b2);
                let y = tape.tanh(y);
                let sq = tape.square(y);
                tape.mean_all(sq)
            },
            &mut store,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "mlp gradient check error {err}");
    }

    #[test]
    fn ops_are_bitwise_deterministic() {
        let run = || {
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::from_vec(2, 3, vec![0.1, 0.9, -2.3, 4.5, -0.01, 7.7]));
            let s = tape.softmax_rows(x);
            let e = tape.exp(s);
            let m = tape.mean_all(e);
            tape.value(m).item().to_bits()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn gather_and_minimum_and_clamp_grads() {
        let mut store = ParamStore::new();
        let id = store.insert("x", Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
        let mut tape = Tape::new();
        let x = tape.param(&store, id);
        let picked = tape.gather_cols(x, vec![2, 0]);
        let loss = tape.sum_all(picked);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(id).data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);

        // min(2x, 3) at x=1 picks 2x; at x=2 picks the constant.
        let mut store = ParamStore::new();
        let id = store.insert("x", Tensor::row(&[1.0, 2.0])).unwrap();
        let mut tape = Tape::new();
        let x = tape.param(&store, id);
        let doubled = tape.mul_scalar(x, 2.0);
        let cap = tape.constant(Tensor::row(&[3.0, 3.0]));
        let m = tape.minimum(doubled, cap);
        let loss = tape.sum_all(m);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(id).data(), &[2.0, 0.0]);

        // clamp passes gradient only in the interior.
        let mut store = ParamStore::new();
        let id = store.insert("x", Tensor::row(&[0.5, 9.0, -9.0])).unwrap();
        let mut tape = Tape::new();
        let x = tape.param(&store, id);
        let c = tape.clamp(x, 0.0, 1.0);
        let loss = tape.sum_all(c);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(id).data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn concat_and_slice_roundtrip_grads() {
        let mut store = ParamStore::new();
        let a = store.insert("a", Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        let b = store.insert("b", Tensor::from_vec(2, 1, vec![5.0, 6.0])).unwrap();
        let mut tape = Tape::new();
        let (na, nb) = (tape.param(&store, a), tape.param(&store, b));
        let cat = tape.concat_cols(na, nb);
        assert_eq!(tape.value(cat).row_slice(0), &[1.0, 2.0, 5.0]);
        let right = tape.slice_cols(cat, 2, 1);
        let loss = tape.sum_all(right);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(a).data(), &[0.0; 4]);
        assert_eq!(store.grad(b).data(), &[1.0, 1.0]);
    }
}
