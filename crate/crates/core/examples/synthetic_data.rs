//! Generates both synthetic presets and prints a class's signal cells as
//! ASCII, plus a round trip through the on-disk layout.

use ffvt::data::{generate_synth, load_dataset, save_dataset, signal_cells, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (name, spec) in [("easy", SynthSpec::easy()), ("hard", SynthSpec::hard())] {
        let data = generate_synth(&spec)?;
        println!("{name}: {} train, {} test, {} classes", data.train.len(), data.test.len(), data.num_classes());
        println!("  signal cells at {:?}", signal_cells(&spec));

        let img = &data.train.samples[0].image;
        let (h, w, c) = (img.shape()[0], img.shape()[1], img.shape()[2]);
        for y in (0..h).step_by(2) {
            let line: String = (0..w)
                .map(|x| {
                    let v: f32 = (0..c).map(|ch| img.data()[(y * w + x) * c + ch].abs()).sum::<f32>() / c as f32;
                    if v > 0.5 {
                        '#'
                    } else if v > 0.15 {
                        '+'
                    } else {
                        '.'
                    }
                })
                .collect();
            println!("  {line}");
        }
    }

    let dir = tempfile::tempdir()?;
    let data = generate_synth(&SynthSpec::easy())?;
    save_dataset(dir.path(), &data)?;
    let back = load_dataset(dir.path())?;
    println!("round trip equal: {}", back.train.samples == data.train.samples);
    Ok(())
}
