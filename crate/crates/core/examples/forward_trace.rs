//! One forward pass with the full trace: per-layer attention, the tokens
//! each layer contributes, and where every fused row came from.

use ffvt::model::Ffvt;
use ffvt::vit::{random_tensor, ModelConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ffvt::Result<()> {
    let cfg = ModelConfig::default();
    let model = Ffvt::<f32>::new(cfg.clone())?;
    let image = random_tensor::<f32>(&mut ChaCha8Rng::seed_from_u64(1), &[cfg.image_h, cfg.image_w, cfg.channels], 1.0);
    let out = model.forward(&image)?;

    println!("N = {} patches, {} layers, K = {}, selector {}", cfg.num_patches(), cfg.layers, cfg.k, cfg.selector);
    for (rec, sel) in out.trace.attention.iter().zip(&out.selections) {
        let row0: Vec<String> = rec.scores.row(0).iter().map(|v| format!("{v:+.3}")).collect();
        println!("layer {}: class row [{}]", rec.layer_index, row0.join(" "));
        println!("         picked {:?} weights {:.4?}", sel.indices, sel.weights);
    }
    println!("fused sequence {:?}, provenance {:?}", out.fused.tokens.shape(), out.fused.provenance);
    println!("logits {:?} -> class {}", out.logits.data(), out.logits.argmax());
    Ok(())
}
