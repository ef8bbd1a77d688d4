//! Trains the default FFVT on the easy synthetic set and reports test
//! accuracy.
//!
//! `cargo run --release --example train_toy -- [steps]`

use std::time::Instant;

use ffvt::data::{generate_synth, SynthSpec};
use ffvt::model::Ffvt;
use ffvt::train::{evaluate, train, TrainConfig};
use ffvt::vit::ModelConfig;

fn main() -> ffvt::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let data = generate_synth(&SynthSpec::easy())?;
    let mut model = Ffvt::<f32>::new(ModelConfig::default())?;
    let cfg = TrainConfig { total_steps: steps, ..TrainConfig::default() };

    let t = Instant::now();
    let log = train(&mut model, &data.train, &cfg)?;
    for s in log.steps.iter().step_by((steps / 10).max(1)) {
        println!("step {:4}  lr {:.5}  loss {:.4}  acc {:.3}", s.step, s.lr, s.loss, s.acc);
    }
    let report = evaluate(&model, &data.test, &cfg.augment)?;
    println!(
        "{} params, {steps} steps in {:.1}s, test accuracy {:.3}",
        model.num_params(),
        t.elapsed().as_secs_f64(),
        report.accuracy
    );
    Ok(())
}
