//! Synthetic fine-grained datasets, augmentation, and the on-disk layout.
//!
//! Every image in a synthetic set shares one smooth background. Classes
//! differ only in the texture painted into a few fixed small square cells,
//! so the discriminative signal is confined to a handful of patches.
//!
//! On disk a dataset is a directory with `train/` and `test/` splits; each
//! split holds `manifest.json` (`{"classes": C, "items": [{"file", "label"}]}`)
//! and one FTZ file per image.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ftz, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub image_size: usize,
    pub channels: usize,
    pub signal_patch_count: usize,
    /// Side length of each signal cell in pixels.
    pub signal_patch_size: usize,
    pub signal_amplitude: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_classes: 5,
            train_per_class: 4,
            test_per_class: 4,
            image_size: 32,
            channels: 3,
            signal_patch_count: 3,
            signal_patch_size: 8,
            signal_amplitude: 1.0,
            noise_std: 0.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// Noise-free, full-amplitude signal.
    pub fn easy() -> Self {
        Self::default()
    }

    /// Weak signal under heavy noise.
    pub fn hard() -> Self {
        SynthSpec { train_per_class: 6, test_per_class: 6, signal_amplitude: 0.3, noise_std: 0.3, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_classes", self.num_classes),
            ("train_per_class", self.train_per_class),
            ("test_per_class", self.test_per_class),
            ("image_size", self.image_size),
            ("channels", self.channels),
            ("signal_patch_count", self.signal_patch_count),
            ("signal_patch_size", self.signal_patch_size),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be positive")));
        }
        if !(self.signal_amplitude > 0.0 && self.signal_amplitude <= 1.0) {
            return Err(Error::config("signal_amplitude must be in (0, 1]"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::config("noise_std must be finite and non-negative"));
        }
        let cells = (self.image_size / self.signal_patch_size).pow(2);
        if self.signal_patch_count > cells {
            return Err(Error::config(format!("{} signal cells requested, only {cells} fit", self.signal_patch_count)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// H×W×C.
    pub image: Tensor<f32>,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub num_classes: usize,
    pub samples: Vec<Sample>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Split,
    pub test: Split,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.train.num_classes
    }
}

/// Top-left pixel of every signal cell, shared by all classes.
pub fn signal_cells(spec: &SynthSpec) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    layout(spec, &mut rng).0
}

type Layout = (Vec<(usize, usize)>, Vec<f64>, Vec<Vec<Vec<f64>>>);

fn layout(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Layout {
    let (s, ch, cell) = (spec.image_size, spec.channels, spec.signal_patch_size);

    let mut background = vec![0.0; s * s * ch];
    for c in 0..ch {
        let fx = rng.gen_range(1..=3) as f64;
        let fy = rng.gen_range(1..=3) as f64;
        let phase = rng.gen_range(0.0..2.0 * PI);
        for y in 0..s {
            for x in 0..s {
                let t = 2.0 * PI * (fx * x as f64 + fy * y as f64) / s as f64 + phase;
                background[(y * s + x) * ch + c] = 0.5 + 0.25 * t.sin();
            }
        }
    }

    let grid = s / cell;
    let mut all: Vec<(usize, usize)> = (0..grid * grid).map(|i| ((i / grid) * cell, (i % grid) * cell)).collect();
    all.shuffle(rng);
    let mut cells = all[..spec.signal_patch_count].to_vec();
    cells.sort_unstable();

    let tile = cell * cell * ch;
    let textures = (0..spec.num_classes)
        .map(|_| cells.iter().map(|_| (0..tile).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect())
        .collect();
    (cells, background, textures)
}

/// Deterministic in `spec.seed`. Samples are ordered class-major within
/// each split.
pub fn generate_synth(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (cells, background, textures) = layout(spec, &mut rng);
    let (s, ch, cell) = (spec.image_size, spec.channels, spec.signal_patch_size);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::config(e.to_string()))?;

    let mut make = |label: usize| -> Result<Sample> {
        let mut px = background.clone();
        for (tex, &(top, left)) in textures[label].iter().zip(&cells) {
            for dy in 0..cell {
                for dx in 0..cell {
                    for c in 0..ch {
                        let v = tex[(dy * cell + dx) * ch + c];
                        px[((top + dy) * s + left + dx) * ch + c] += spec.signal_amplitude * v;
                    }
                }
            }
        }
        if spec.noise_std > 0.0 {
            px.iter_mut().for_each(|p| *p += noise.sample(&mut rng));
        }
        let image = Tensor::new([s, s, ch], px.into_iter().map(|v| v as f32).collect())?;
        Ok(Sample { image, label })
    };

    let mut split = |per_class: usize| -> Result<Split> {
        let mut samples = Vec::with_capacity(per_class * spec.num_classes);
        for label in 0..spec.num_classes {
            for _ in 0..per_class {
                samples.push(make(label)?);
            }
        }
        Ok(Split { num_classes: spec.num_classes, samples })
    };
    let train = split(spec.train_per_class)?;
    let test = split(spec.test_per_class)?;
    Ok(Dataset { train, test })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Random crop and random horizontal flip.
    Train,
    /// Center crop, no flip.
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub flip: bool,
    pub crop_size: usize,
    pub resize_to: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { flip: true, crop_size: 32, resize_to: 32 }
    }
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn resize_bilinear(image: &Tensor<f32>, out_h: usize, out_w: usize) -> Result<Tensor<f32>> {
    let [h, w, ch] = image.shape()[..] else {
        return Err(Error::dim(format!("image must be H×W×C, got {:?}", image.shape())));
    };
    if out_h == h && out_w == w {
        return Ok(image.clone());
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::config("resize target must be positive"));
    }
    let src = image.data();
    let sample_axis = |o: usize, out: usize, inp: usize| {
        let pos = ((o as f64 + 0.5) * inp as f64 / out as f64 - 0.5).max(0.0);
        let i0 = (pos.floor() as usize).min(inp - 1);
        let i1 = (i0 + 1).min(inp - 1);
        (i0, i1, (pos - i0 as f64) as f32)
    };
    let mut out = Vec::with_capacity(out_h * out_w * ch);
    for oy in 0..out_h {
        let (y0, y1, fy) = sample_axis(oy, out_h, h);
        for ox in 0..out_w {
            let (x0, x1, fx) = sample_axis(ox, out_w, w);
            for c in 0..ch {
                let p = |y: usize, x: usize| src[(y * w + x) * ch + c];
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::new([out_h, out_w, ch], out)
}

pub fn crop(image: &Tensor<f32>, top: usize, left: usize, size: usize) -> Result<Tensor<f32>> {
    let [h, w, ch] = image.shape()[..] else {
        return Err(Error::dim(format!("image must be H×W×C, got {:?}", image.shape())));
    };
    if size == 0 || top + size > h || left + size > w {
        return Err(Error::config(format!("crop {size}x{size} at ({top}, {left}) does not fit {h}x{w}")));
    }
    let src = image.data();
    let mut out = Vec::with_capacity(size * size * ch);
    for y in top..top + size {
        let start = (y * w + left) * ch;
        out.extend_from_slice(&src[start..start + size * ch]);
    }
    Ok(Tensor::from_parts(vec![size, size, ch], out))
}

/// `floor((S - c) / 2)` on both axes.
pub fn center_offsets(h: usize, w: usize, size: usize) -> (usize, usize) {
    ((h.saturating_sub(size)) / 2, (w.saturating_sub(size)) / 2)
}

pub fn hflip(image: &Tensor<f32>) -> Tensor<f32> {
    let (h, w, ch) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let src = image.data();
    let mut out = Vec::with_capacity(src.len());
    for y in 0..h {
        for x in (0..w).rev() {
            let start = (y * w + x) * ch;
            out.extend_from_slice(&src[start..start + ch]);
        }
    }
    Tensor::from_parts(vec![h, w, ch], out)
}

/// Resize to `resize_to`², crop to `crop_size`² and, in training mode,
/// flip horizontally with probability 1/2.
pub fn augment(image: &Tensor<f32>, cfg: &AugmentConfig, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor<f32>> {
    if cfg.crop_size > cfg.resize_to {
        return Err(Error::config(format!(
            "crop {} is larger than the resized image {}",
            cfg.crop_size, cfg.resize_to
        )));
    }
    let resized = resize_bilinear(image, cfg.resize_to, cfg.resize_to)?;
    let slack = cfg.resize_to - cfg.crop_size;
    let (top, left) = match mode {
        Mode::Train => (rng.gen_range(0..=slack), rng.gen_range(0..=slack)),
        Mode::Eval => center_offsets(cfg.resize_to, cfg.resize_to, cfg.crop_size),
    };
    let mut out = crop(&resized, top, left, cfg.crop_size)?;
    if mode == Mode::Train && cfg.flip && rng.gen_bool(0.5) {
        out = hflip(&out);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitManifest {
    classes: usize,
    items: Vec<ManifestItem>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestItem {
    file: String,
    label: usize,
}

fn save_split(dir: &Path, split: &Split) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut items = Vec::with_capacity(split.len());
    for (i, s) in split.samples.iter().enumerate() {
        let file = format!("img_{i:05}.ftz");
        ftz::write(dir.join(&file), &s.image)?;
        items.push(ManifestItem { file, label: s.label });
    }
    let manifest = SplitManifest { classes: split.num_classes, items };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

fn load_split(dir: &Path) -> Result<Split> {
    let path = dir.join("manifest.json");
    let raw = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: SplitManifest = serde_json::from_slice(&raw).map_err(|e| Error::format(&path, e.to_string()))?;
    let mut samples = Vec::with_capacity(manifest.items.len());
    for item in manifest.items {
        if item.label >= manifest.classes {
            return Err(Error::format(
                &path,
                format!("label {} out of range for {} classes", item.label, manifest.classes),
            ));
        }
        let image = ftz::read::<f32>(dir.join(&item.file))?;
        samples.push(Sample { image, label: item.label });
    }
    Ok(Split { num_classes: manifest.classes, samples })
}

pub fn save_dataset(dir: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    save_split(&dir.join("train"), &data.train)?;
    save_split(&dir.join("test"), &data.test)
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    if !dir.join("train").join("manifest.json").is_file() {
        return Err(Error::config(format!(
            "no dataset at {} (expected train/manifest.json; run `ffvt gen` first)",
            dir.display()
        )));
    }
    let train = load_split(&dir.join("train"))?;
    let test = load_split(&dir.join("test"))?;
    if train.num_classes != test.num_classes {
        return Err(Error::format(dir, "train and test class counts differ"));
    }
    Ok(Dataset { train, test })
}
