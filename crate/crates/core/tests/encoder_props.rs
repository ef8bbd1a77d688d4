use ffvt::model::Ffvt;
use ffvt::select::head_average;
use ffvt::tensor::ops::softmax;
use ffvt::vit::{random_tensor, EncoderLayer, ModelConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn layer(d: usize, m: usize, seed: u64) -> EncoderLayer<ffvt::Tensor<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut l = EncoderLayer::zeroed(d, m);
    for (_, p) in l.named_mut() {
        *p = random_tensor(&mut rng, &p.shape().to_vec(), 0.5);
    }
    l
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn layers_preserve_sequence_shape(s in 1usize..40, heads in 1usize..4, seed in any::<u64>()) {
        let d = heads * 4;
        let l = layer(d, 2 * d, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let z = random_tensor::<f64>(&mut rng, &[s, d], 1.0);
        let (out, rec) = l.forward(&z, heads, 1).unwrap();
        prop_assert_eq!(out.shape(), &[s, d]);
        prop_assert_eq!(rec.scores.shape(), &[s, s]);
        prop_assert_eq!(rec.per_head.len(), heads);

        let avg = head_average(&rec.per_head).unwrap();
        prop_assert!(avg.max_abs_diff(&rec.scores).unwrap() < 1e-12);
        for h in &rec.per_head {
            let p = softmax(h).unwrap();
            for i in 0..s {
                prop_assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn init_is_reproducible() {
    let cfg = ModelConfig { seed: 17, ..ModelConfig::default() };
    let a = Ffvt::<f32>::new(cfg.clone()).unwrap();
    let b = Ffvt::<f32>::new(cfg.clone()).unwrap();
    assert_eq!(a.params, b.params);
    let c = Ffvt::<f32>::new(ModelConfig { seed: 18, ..cfg }).unwrap();
    assert_ne!(a.params, c.params);
}
