//! Trains plain ViT, FFVT with SAWS and FFVT with MAWS from the same
//! initial weights on the hard synthetic set.
//!
//! `cargo run --release --example ablation -- [steps]`

use ffvt::data::{generate_synth, SynthSpec};
use ffvt::model::Ffvt;
use ffvt::train::{evaluate, train, TrainConfig};
use ffvt::vit::{ModelConfig, SelectorKind};

fn main() -> ffvt::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let data = generate_synth(&SynthSpec::hard())?;
    let cfg = TrainConfig { total_steps: steps, ..TrainConfig::default() };

    println!("{:<14}{:>10}{:>10}", "variant", "test_acc", "train_acc");
    for (name, selector) in
        [("ViT", SelectorKind::None), ("ViT+FF+SAWS", SelectorKind::Saws), ("ViT+FF+MAWS", SelectorKind::Maws)]
    {
        let mut model = Ffvt::<f32>::new(ModelConfig { selector, ..ModelConfig::default() })?;
        train(&mut model, &data.train, &cfg)?;
        let test = evaluate(&model, &data.test, &cfg.augment)?;
        let tr = evaluate(&model, &data.train, &cfg.augment)?;
        println!("{name:<14}{:>10.4}{:>10.4}", test.accuracy, tr.accuracy);
    }
    Ok(())
}
