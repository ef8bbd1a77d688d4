//! Patch embedding and transformer encoder layers.
//!
//! Parameters live in small generic structs (`PatchEmbedding<P>`,
//! `EncoderLayer<P>`). With `P = Tensor<T>` they hold stored weights; after
//! binding to a tape with `P = Var` the same structs drive a differentiable
//! forward pass.

use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{c, Scalar, Tensor};

pub const LN_EPS: f64 = 1e-6;
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SelectorKind {
    /// Pass-through fusion: the final layer sees every token (plain ViT).
    None,
    Saws,
    Maws,
}

impl SelectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectorKind::None => "NONE",
            SelectorKind::Saws => "SAWS",
            SelectorKind::Maws => "MAWS",
        }
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(SelectorKind::None),
            "saws" => Ok(SelectorKind::Saws),
            "maws" => Ok(SelectorKind::Maws),
            other => Err(Error::config(format!("unknown selector {other:?} (none|saws|maws)"))),
        }
    }
}

impl std::fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub image_h: usize,
    pub image_w: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_dim: usize,
    pub k: usize,
    pub selector: SelectorKind,
    pub num_classes: usize,
    /// Number of affine maps in the classification head (GELU between them).
    pub head_depth: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            image_h: 32,
            image_w: 32,
            channels: 3,
            patch_size: 8,
            embed_dim: 32,
            layers: 4,
            heads: 4,
            mlp_dim: 128,
            k: 4,
            selector: SelectorKind::Maws,
            num_classes: 5,
            head_depth: 1,
            seed: 0,
        }
    }
}

/// `floor(h/p) * floor(w/p)`
pub fn num_patches(h: usize, w: usize, p: usize) -> usize {
    (h / p) * (w / p)
}

impl ModelConfig {
    pub fn num_patches(&self) -> usize {
        num_patches(self.image_h, self.image_w, self.patch_size)
    }

    pub fn seq_len(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    /// Rows of the final layer's input: `1 + (L-1)·K` with a selector, the
    /// full sequence under pass-through.
    pub fn fused_len(&self) -> usize {
        match self.selector {
            SelectorKind::None => self.seq_len(),
            _ => 1 + (self.layers - 1) * self.k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("image_h", self.image_h),
            ("image_w", self.image_w),
            ("channels", self.channels),
            ("patch_size", self.patch_size),
            ("embed_dim", self.embed_dim),
            ("heads", self.heads),
            ("mlp_dim", self.mlp_dim),
            ("k", self.k),
            ("num_classes", self.num_classes),
            ("head_depth", self.head_depth),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be positive")));
        }
        if self.layers < 2 {
            return Err(Error::config(format!("layers must be >= 2, got {}", self.layers)));
        }
        if self.patch_size > self.image_h || self.patch_size > self.image_w {
            return Err(Error::config(format!(
                "patch size {} exceeds image {}x{}",
                self.patch_size, self.image_h, self.image_w
            )));
        }
        if self.embed_dim % self.heads != 0 {
            return Err(Error::config(format!("embed_dim {} not divisible by heads {}", self.embed_dim, self.heads)));
        }
        if self.k > self.num_patches() {
            return Err(Error::config(format!(
                "k = {} exceeds the {} available patch tokens",
                self.k,
                self.num_patches()
            )));
        }
        Ok(())
    }
}

macro_rules! param_group {
    ($(#[$meta:meta])* $name:ident { $($field:ident => $key:literal),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name<P> {
            $(pub $field: P),*
        }

        impl<P> $name<P> {
            pub fn named(&self) -> Vec<(&'static str, &P)> {
                vec![$(($key, &self.$field)),*]
            }

            pub fn named_mut(&mut self) -> Vec<(&'static str, &mut P)> {
                vec![$(($key, &mut self.$field)),*]
            }

            pub fn map<Q>(&self, mut f: impl FnMut(&P) -> Q) -> $name<Q> {
                $name { $($field: f(&self.$field)),* }
            }
        }
    };
}
pub(crate) use param_group;

param_group! {
    /// `E`: (P²·C)×D projection, `pos`: (N+1)×D, `cls`: D.
    PatchEmbedding {
        proj => "E",
        pos => "pos",
        cls => "cls",
    }
}

param_group! {
    /// One pre-norm transformer block: MSA and MLP, each with a residual.
    EncoderLayer {
        ln1_gamma => "ln1.gamma",
        ln1_beta => "ln1.beta",
        wq => "wq",
        wk => "wk",
        wv => "wv",
        wo => "wo",
        ln2_gamma => "ln2.gamma",
        ln2_beta => "ln2.beta",
        w1 => "mlp.w1",
        b1 => "mlp.b1",
        w2 => "mlp.w2",
        b2 => "mlp.b2",
    }
}

/// Normal with std `std`, redrawn outside ±2 std.
pub fn trunc_normal<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let z: f64 = StandardNormal.sample(rng);
            if z.abs() <= 2.0 {
                break c::<T>(z * std);
            }
        })
        .collect();
    Tensor::from_parts(shape.to_vec(), data)
}

impl<T: Scalar> PatchEmbedding<Tensor<T>> {
    pub fn init(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = cfg.embed_dim;
        PatchEmbedding {
            proj: trunc_normal(rng, &[cfg.patch_dim(), d], INIT_STD),
            pos: trunc_normal(rng, &[cfg.seq_len(), d], INIT_STD),
            cls: trunc_normal(rng, &[d], INIT_STD),
        }
    }
}

impl<T: Scalar> EncoderLayer<Tensor<T>> {
    pub fn init(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let (d, m) = (cfg.embed_dim, cfg.mlp_dim);
        EncoderLayer {
            ln1_gamma: Tensor::ones([d]),
            ln1_beta: Tensor::zeros([d]),
            wq: trunc_normal(rng, &[d, d], INIT_STD),
            wk: trunc_normal(rng, &[d, d], INIT_STD),
            wv: trunc_normal(rng, &[d, d], INIT_STD),
            wo: trunc_normal(rng, &[d, d], INIT_STD),
            ln2_gamma: Tensor::ones([d]),
            ln2_beta: Tensor::zeros([d]),
            w1: trunc_normal(rng, &[d, m], INIT_STD),
            b1: Tensor::zeros([m]),
            w2: trunc_normal(rng, &[m, d], INIT_STD),
            b2: Tensor::zeros([d]),
        }
    }

    /// Zero projections, unit gamma, zero beta.
    pub fn zeroed(d: usize, mlp_dim: usize) -> Self {
        EncoderLayer {
            ln1_gamma: Tensor::ones([d]),
            ln1_beta: Tensor::zeros([d]),
            wq: Tensor::zeros([d, d]),
            wk: Tensor::zeros([d, d]),
            wv: Tensor::zeros([d, d]),
            wo: Tensor::zeros([d, d]),
            ln2_gamma: Tensor::ones([d]),
            ln2_beta: Tensor::zeros([d]),
            w1: Tensor::zeros([d, mlp_dim]),
            b1: Tensor::zeros([mlp_dim]),
            w2: Tensor::zeros([mlp_dim, d]),
            b2: Tensor::zeros([d]),
        }
    }

    /// Tape-free forward: returns the layer output and its attention record.
    pub fn forward(&self, z: &Tensor<T>, heads: usize, layer_index: usize) -> Result<(Tensor<T>, AttentionRecord<T>)> {
        let mut tape = Tape::new();
        let layer = self.map(|p| tape.constant(p.clone()));
        let zv = tape.constant(z.clone());
        let (out, rec) = encoder_layer(&mut tape, zv, &layer, heads, layer_index)?;
        Ok((tape.value(out).clone(), rec))
    }
}

/// Head-averaged pre-softmax attention scores of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionRecord<T> {
    /// 1-based layer number.
    pub layer_index: usize,
    /// S×S mean over heads of `Q_h K_hᵀ / sqrt(D/h)`; index 0 is the class token.
    pub scores: Tensor<T>,
    /// The individual per-head score matrices.
    pub per_head: Vec<Tensor<T>>,
}

/// Hidden states and attention of layers `1..L-1`, as plain values.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderTrace<T> {
    pub hidden: Vec<Tensor<T>>,
    pub attention: Vec<AttentionRecord<T>>,
}

/// Same as [`EncoderTrace`] but with hidden states still on the tape.
#[derive(Clone, Debug)]
pub struct TapeTrace<T> {
    pub hidden: Vec<Var>,
    pub attention: Vec<AttentionRecord<T>>,
}

impl<T: Scalar> TapeTrace<T> {
    pub fn materialize(&self, tape: &Tape<T>) -> EncoderTrace<T> {
        EncoderTrace {
            hidden: self.hidden.iter().map(|&v| tape.value(v).clone()).collect(),
            attention: self.attention.clone(),
        }
    }
}

/// Splits an H×W×C image into row-major P×P patches, each flattened
/// row-major then channel. Trailing rows/columns that do not fill a whole
/// patch are dropped.
pub fn patchify<T: Scalar>(image: &Tensor<T>, p: usize) -> Result<Tensor<T>> {
    let [h, w, ch] = image.shape()[..] else {
        return Err(Error::dim(format!("image must be H×W×C, got {:?}", image.shape())));
    };
    if p == 0 || p > h || p > w {
        return Err(Error::dim(format!("patch size {p} does not fit image {h}x{w}")));
    }
    let (gh, gw) = (h / p, w / p);
    let pd = p * p * ch;
    let src = image.data();
    let mut out = Vec::with_capacity(gh * gw * pd);
    for gy in 0..gh {
        for gx in 0..gw {
            for dy in 0..p {
                let y = gy * p + dy;
                let start = (y * w + gx * p) * ch;
                out.extend_from_slice(&src[start..start + p * ch]);
            }
        }
    }
    Ok(Tensor::from_parts(vec![gh * gw, pd], out))
}

/// `z0 = [cls; patches·E] + pos`
pub fn embed<T: Scalar>(tape: &mut Tape<T>, patches: Var, pe: &PatchEmbedding<Var>) -> Result<Var> {
    let (n, _) = tape.value(patches).dims2()?;
    let (pos_rows, d) = tape.value(pe.pos).dims2()?;
    if pos_rows != n + 1 {
        return Err(Error::dim(format!("position embedding has {pos_rows} rows, need N+1 = {}", n + 1)));
    }
    let tokens = tape.matmul(patches, pe.proj)?;
    let cls = tape.reshape(pe.cls, &[1, d])?;
    let seq = tape.concat_rows(&[cls, tokens])?;
    tape.add(seq, pe.pos)
}

fn tag_layer(layer_index: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric(msg) => Error::Numeric(format!("layer {layer_index}: {msg}")),
        other => other,
    }
}

/// `MSA(LN(z)) + z`. Also returns the head-averaged pre-softmax scores.
pub fn msa<T: Scalar>(
    tape: &mut Tape<T>,
    z: Var,
    layer: &EncoderLayer<Var>,
    heads: usize,
    layer_index: usize,
) -> Result<(Var, AttentionRecord<T>)> {
    let run = |tape: &mut Tape<T>| -> Result<(Var, AttentionRecord<T>)> {
        let (s, d) = tape.value(z).dims2()?;
        if heads == 0 || d % heads != 0 {
            return Err(Error::config(format!("{heads} heads do not divide width {d}")));
        }
        let dh = d / heads;
        let x = tape.layer_norm(z, layer.ln1_gamma, layer.ln1_beta, c(LN_EPS))?;
        let q = tape.matmul(x, layer.wq)?;
        let k = tape.matmul(x, layer.wk)?;
        let v = tape.matmul(x, layer.wv)?;
        let inv_sqrt = c::<T>(1.0 / (dh as f64).sqrt());
        let mut outs = Vec::with_capacity(heads);
        let mut per_head = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let kt = tape.transpose(kh)?;
            let raw = tape.matmul(qh, kt)?;
            let scores = tape.scale(raw, inv_sqrt)?;
            per_head.push(tape.value(scores).clone());
            let probs = tape.softmax(scores)?;
            outs.push(tape.matmul(probs, vh)?);
        }
        let cat = if heads == 1 { outs[0] } else { tape.concat_cols(&outs)? };
        let proj = tape.matmul(cat, layer.wo)?;
        let out = tape.add(proj, z)?;

        let mut avg = vec![T::zero(); s * s];
        for m in &per_head {
            for (a, &x) in avg.iter_mut().zip(m.data()) {
                *a = *a + x;
            }
        }
        let hn: T = c(heads as f64);
        avg.iter_mut().for_each(|a| *a = *a / hn);
        let scores = Tensor::from_parts(vec![s, s], avg);
        Ok((out, AttentionRecord { layer_index, scores, per_head }))
    };
    run(tape).map_err(tag_layer(layer_index))
}

/// Full block: `z' = MSA(LN(z)) + z`, then `MLP(LN(z')) + z'`.
pub fn encoder_layer<T: Scalar>(
    tape: &mut Tape<T>,
    z: Var,
    layer: &EncoderLayer<Var>,
    heads: usize,
    layer_index: usize,
) -> Result<(Var, AttentionRecord<T>)> {
    let (mid, rec) = msa(tape, z, layer, heads, layer_index)?;
    let mlp = |tape: &mut Tape<T>| -> Result<Var> {
        let y = tape.layer_norm(mid, layer.ln2_gamma, layer.ln2_beta, c(LN_EPS))?;
        let h = tape.matmul(y, layer.w1)?;
        let h = tape.add_row(h, layer.b1)?;
        let a = tape.gelu(h)?;
        let o = tape.matmul(a, layer.w2)?;
        let o = tape.add_row(o, layer.b2)?;
        tape.add(o, mid)
    };
    let out = mlp(tape).map_err(tag_layer(layer_index))?;
    Ok((out, rec))
}

/// Applies `layers` in order, keeping every hidden state and attention record.
pub fn forward_collect<T: Scalar>(
    tape: &mut Tape<T>,
    z0: Var,
    layers: &[EncoderLayer<Var>],
    heads: usize,
) -> Result<TapeTrace<T>> {
    if layers.is_empty() {
        return Err(Error::config("forward_collect needs at least one layer"));
    }
    let mut hidden = Vec::with_capacity(layers.len());
    let mut attention = Vec::with_capacity(layers.len());
    let mut z = z0;
    for (i, layer) in layers.iter().enumerate() {
        let (out, rec) = encoder_layer(tape, z, layer, heads, i + 1)?;
        hidden.push(out);
        attention.push(rec);
        z = out;
    }
    Ok(TapeTrace { hidden, attention })
}

/// Uniform random draw helper shared by test fixtures and examples.
pub fn random_tensor<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| c::<T>(rng.gen_range(-scale..scale))).collect();
    Tensor::from_parts(shape.to_vec(), data)
}
