//! Mini-batch SGD with momentum under a cosine schedule, and evaluation.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::{augment, AugmentConfig, Mode, Split};
use crate::error::{Error, Result};
use crate::model::{ffvt_forward_tape, Ffvt};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub total_steps: usize,
    pub batch_size: usize,
    /// Seeds the shuffle and augmentation streams.
    pub seed: u64,
    pub augment: AugmentConfig,
    /// Rescales the batch gradient to at most this global L2 norm.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.02,
            momentum: 0.9,
            total_steps: 300,
            batch_size: 8,
            seed: 0,
            augment: AugmentConfig::default(),
            clip_norm: Some(1.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::config("lr0 must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must be in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.total_steps == 0 {
            return Err(Error::config("total_steps must be at least 1"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::config("clip_norm must be positive"));
            }
        }
        Ok(())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seeds derived from one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedStreams {
    pub init: u64,
    pub shuffle: u64,
    pub augment: u64,
    pub data: u64,
}

impl SeedStreams {
    pub fn from_master(seed: u64) -> Self {
        SeedStreams {
            init: splitmix64(seed ^ 0x1),
            shuffle: splitmix64(seed ^ 0x2),
            augment: splitmix64(seed ^ 0x3),
            data: splitmix64(seed ^ 0x4),
        }
    }
}

/// `lr0 · (1 + cos(π · step / total)) / 2`
pub fn cosine_lr(step: usize, total: usize, lr0: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::Usage("cosine_lr needs total >= 1".into()));
    }
    if step > total {
        return Err(Error::Usage(format!("step {step} beyond schedule length {total}")));
    }
    Ok(lr0 * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos()) / 2.0)
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before scaling.
pub fn clip_global_norm<T: Scalar>(grads: &mut [Tensor<T>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|x| {
            let x = x.to_f64().unwrap();
            x * x
        })
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = T::from_f64_lossy(max_norm / norm);
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x = *x * s);
        }
    }
    norm
}

/// Heavy-ball update: `v ← μ·v + g`, `p ← p − lr·v`.
pub fn sgd_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[Tensor<T>],
    velocity: &mut [Tensor<T>],
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::dim(format!(
            "sgd_step: {} params, {} grads, {} velocities",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    let (lr, mu) = (T::from_f64_lossy(lr), T::from_f64_lossy(momentum));
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(Error::dim(format!(
                "sgd_step: param {:?}, grad {:?}, velocity {:?}",
                p.shape(),
                g.shape(),
                v.shape()
            )));
        }
        for ((pi, &gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vi = mu * *vi + gi;
            *pi = *pi - lr * *vi;
        }
        p.check_finite("sgd_step")?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepLog>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,lr,loss,acc\n");
        for s in &self.steps {
            writeln!(out, "{},{},{},{}", s.step, s.lr, s.loss, s.acc).unwrap();
        }
        out
    }

    pub fn initial_loss(&self) -> Option<f64> {
        self.steps.first().map(|s| s.loss)
    }
}

/// Loss and gradients of one mini-batch; gradients are batch means.
pub fn batch_gradients<T: Scalar>(model: &Ffvt<T>, batch: &[(Tensor<T>, usize)]) -> Result<(f64, f64, Vec<Tensor<T>>)> {
    let named = model.params.named();
    let mut sums: Vec<Vec<T>> = named.iter().map(|(_, t)| vec![T::zero(); t.numel()]).collect();
    let inv_b = T::from_f64_lossy(1.0 / batch.len() as f64);
    let (mut loss_sum, mut correct) = (0.0, 0usize);
    for (image, label) in batch {
        let mut tape = Tape::new();
        let params = model.bind(&mut tape, true);
        let fwd = ffvt_forward_tape(&mut tape, &model.config, &params, image, None)?;
        if tape.value(fwd.logits).argmax() == *label {
            correct += 1;
        }
        let loss = tape.cross_entropy(fwd.logits, *label)?;
        loss_sum += tape.value(loss).item()?.to_f64().unwrap();
        let mut grads = tape.backward(loss)?;
        let vars: Vec<_> = params.named().into_iter().map(|(_, v)| *v).collect();
        for (sum, var) in sums.iter_mut().zip(vars) {
            if let Some(g) = grads.take_raw(var) {
                sum.iter_mut().zip(g).for_each(|(s, g)| *s = *s + g * inv_b);
            }
        }
    }
    let grads = named.iter().zip(sums).map(|((_, t), s)| Tensor::new(t.shape().to_vec(), s)).collect::<Result<_>>()?;
    let n = batch.len() as f64;
    Ok((loss_sum / n, correct as f64 / n, grads))
}

/// Trains in place for `cfg.total_steps` steps.
///
/// Batches are drawn from a reshuffled permutation of the split each epoch.
/// The run is fully determined by the initial weights, the split and `cfg`.
pub fn train<T: Scalar>(model: &mut Ffvt<T>, data: &Split, cfg: &TrainConfig) -> Result<TrainLog> {
    train_with(model, data, cfg, |_| {})
}

/// [`train`] with a callback after every step.
pub fn train_with<T: Scalar>(
    model: &mut Ffvt<T>,
    data: &Split,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepLog),
) -> Result<TrainLog> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Usage("cannot train on an empty split".into()));
    }
    let mc = &model.config;
    if cfg.augment.crop_size != mc.image_h || cfg.augment.crop_size != mc.image_w {
        return Err(Error::config(format!(
            "crop size {} does not match model input {}x{}",
            cfg.augment.crop_size, mc.image_h, mc.image_w
        )));
    }
    let streams = SeedStreams::from_master(cfg.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(streams.shuffle);
    let mut aug_rng = ChaCha8Rng::seed_from_u64(streams.augment);
    let mut order: Vec<usize> = Vec::new();
    let mut velocity: Vec<Tensor<T>> =
        model.params.named().iter().map(|(_, t)| Tensor::zeros(t.shape().to_vec())).collect();
    let mut log = TrainLog::default();

    for step in 0..cfg.total_steps {
        let lr = cosine_lr(step, cfg.total_steps, cfg.lr0)?;
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if order.is_empty() {
                order = (0..data.len()).collect();
                order.shuffle(&mut shuffle_rng);
                order.reverse();
            }
            let s = &data.samples[order.pop().unwrap()];
            let img = augment(&s.image, &cfg.augment, Mode::Train, &mut aug_rng)?;
            batch.push((img.cast::<T>(), s.label));
        }
        let (loss, acc, mut grads) = batch_gradients(model, &batch).map_err(|e| match e {
            Error::Numeric(msg) => Error::Numeric(format!("step {step}: {msg}")),
            other => other,
        })?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("step {step}: loss is {loss}")));
        }
        if let Some(c) = cfg.clip_norm {
            clip_global_norm(&mut grads, c);
        }
        let mut params = model.params.params_mut();
        sgd_step(&mut params, &grads, &mut velocity, lr, cfg.momentum)
            .map_err(|e| Error::Numeric(format!("step {step}: {e}")))?;
        let entry = StepLog { step, lr, loss, acc };
        on_step(&entry);
        log.steps.push(entry);
    }
    Ok(log)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub per_class: Vec<f64>,
    pub mean_loss: f64,
    pub correct: usize,
    pub total: usize,
}

/// Scores precomputed logits against labels.
pub fn score<T: Scalar>(logits: &[Tensor<T>], labels: &[usize], num_classes: usize) -> Result<EvalReport> {
    if logits.is_empty() {
        return Err(Error::Usage("cannot evaluate an empty dataset".into()));
    }
    if logits.len() != labels.len() {
        return Err(Error::dim("logits and labels differ in length"));
    }
    let mut hits = vec![0usize; num_classes];
    let mut seen = vec![0usize; num_classes];
    let mut loss = 0.0;
    for (l, &y) in logits.iter().zip(labels) {
        if y >= num_classes {
            return Err(Error::Index(format!("label {y} out of range")));
        }
        seen[y] += 1;
        if l.argmax() == y {
            hits[y] += 1;
        }
        loss += crate::tensor::ops::cross_entropy(l, y)?.0.to_f64().unwrap();
    }
    let correct: usize = hits.iter().sum();
    let per_class = hits.iter().zip(&seen).map(|(&h, &n)| if n == 0 { 0.0 } else { h as f64 / n as f64 }).collect();
    Ok(EvalReport {
        accuracy: correct as f64 / labels.len() as f64,
        per_class,
        mean_loss: loss / labels.len() as f64,
        correct,
        total: labels.len(),
    })
}

/// Accuracy under the center-crop evaluation pipeline.
pub fn evaluate<T: Scalar>(model: &Ffvt<T>, data: &Split, aug: &AugmentConfig) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::Usage("cannot evaluate an empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut logits = Vec::with_capacity(data.len());
    let mut labels = Vec::with_capacity(data.len());
    for s in &data.samples {
        let img = augment(&s.image, aug, Mode::Eval, &mut rng)?;
        logits.push(model.logits(&img.cast::<T>())?);
        labels.push(s.label);
    }
    score(&logits, &labels, data.num_classes)
}
