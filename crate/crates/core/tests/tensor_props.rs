use ffvt::autodiff::Tape;
use ffvt::tensor::ops::{layer_norm, softmax};
use ffvt::verify::{check_ops, OP_TOLERANCE};
use ffvt::vit::{random_tensor, LN_EPS};
use ffvt::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rows() -> impl Strategy<Value = Tensor<f64>> {
    (1usize..6, 2usize..12).prop_flat_map(|(m, n)| {
        prop::collection::vec(-20.0f64..20.0, m * n).prop_map(move |v| Tensor::new([m, n], v).unwrap())
    })
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(x in rows(), c in -50.0f64..50.0) {
        let y = softmax(&x).unwrap();
        let (m, _) = x.dims2().unwrap();
        for i in 0..m {
            prop_assert!(y.row(i).iter().all(|&p| p > 0.0));
            prop_assert!((y.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
            let xi = Tensor::new([x.row(i).len()], x.row(i).to_vec()).unwrap();
            let yi = Tensor::new([y.row(i).len()], y.row(i).to_vec()).unwrap();
            prop_assert_eq!(xi.argmax(), yi.argmax());
        }
        let shifted = softmax(&x.map(|v| v + c)).unwrap();
        prop_assert!(shifted.max_abs_diff(&y).unwrap() < 1e-12);
    }

    #[test]
    fn layer_norm_standardizes(x in rows()) {
        let (m, n) = x.dims2().unwrap();
        let y = layer_norm(&x, &Tensor::ones([n]), &Tensor::zeros([n]), LN_EPS).unwrap();
        for i in 0..m {
            let xr = x.row(i);
            let xm = xr.iter().sum::<f64>() / n as f64;
            let xv = xr.iter().map(|v| (v - xm).powi(2)).sum::<f64>() / n as f64;
            prop_assume!(xv > 1e-2);
            let r = y.row(i);
            let mean = r.iter().sum::<f64>() / n as f64;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-6);
            prop_assert!((var - 1.0).abs() < 1e-4);
        }
    }
}

#[test]
fn every_op_matches_finite_differences_over_100_seeds() {
    for seed in 0..100 {
        for r in check_ops(seed, None).unwrap() {
            assert!(r.max_rel_error < OP_TOLERANCE, "seed {seed}: {r:?}");
        }
    }
}

#[test]
fn tape_replay_is_bit_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut tape = Tape::<f64>::new();
        let a = tape.param(random_tensor(&mut rng, &[6, 5], 1.0));
        let b = tape.param(random_tensor(&mut rng, &[5, 7], 1.0));
        let g = tape.param(random_tensor(&mut rng, &[7], 1.0));
        let z = tape.param(Tensor::zeros([7]));
        let h = tape.matmul(a, b).unwrap();
        let h = tape.layer_norm(h, g, z, LN_EPS).unwrap();
        let h = tape.gelu(h).unwrap();
        let h = tape.softmax(h).unwrap();
        let r = tape.gather_rows(h, &[0]).unwrap();
        let r = tape.reshape(r, &[7]).unwrap();
        let loss = tape.cross_entropy(r, 2).unwrap();
        let value = tape.value(loss).item().unwrap().to_bits();
        let grads = tape.backward(loss).unwrap();
        let bits: Vec<u64> = [a, b, g].iter().flat_map(|&v| grads.get(v).into_data()).map(f64::to_bits).collect();
        (value, bits)
    };
    assert_eq!(run(), run());
}
