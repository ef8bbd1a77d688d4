//! The feature-fusion forward pass.
//!
//! Layers `1..L-1` run on the full token sequence. From each of them the
//! selector picks K patch tokens; the final layer then runs on
//!
//! ```text
//! [ z_{L-1}[0] ; z_1[sel_1] ; z_2[sel_2] ; ... ; z_{L-1}[sel_{L-1}] ]
//! ```
//!
//! and the class token of its output feeds the classification head.
//! Selections are hard indices: gradients flow through the gathered token
//! values, never through the choice of indices.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::select::{select_per_layer, SelectionResult};
use crate::tensor::{c, ftz, DType, Scalar, Tensor};
use crate::train::SeedStreams;
use crate::vit::{
    embed, encoder_layer, forward_collect, param_group, patchify, trunc_normal, EncoderLayer, EncoderTrace,
    ModelConfig, PatchEmbedding, SelectorKind, TapeTrace, INIT_STD, LN_EPS,
};

param_group! {
    Dense {
        w => "w",
        b => "b",
    }
}

param_group! {
    Norm {
        gamma => "gamma",
        beta => "beta",
    }
}

/// Final layer norm followed by `head_depth` affine maps (GELU between).
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead<P> {
    pub norm: Norm<P>,
    pub hidden: Vec<Dense<P>>,
    pub out: Dense<P>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FfvtParams<P> {
    pub embed: PatchEmbedding<P>,
    /// All L encoder layers; the last one consumes the fused sequence.
    pub layers: Vec<EncoderLayer<P>>,
    pub head: ClassifierHead<P>,
}

impl<P> FfvtParams<P> {
    /// Parameters with their checkpoint names, in a fixed order.
    pub fn named(&self) -> Vec<(String, &P)> {
        let mut out: Vec<(String, &P)> = Vec::new();
        for (k, p) in self.embed.named() {
            out.push((format!("embed.{k}"), p));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            for (k, p) in layer.named() {
                out.push((format!("layer.{}.{k}", l + 1), p));
            }
        }
        for (k, p) in self.head.norm.named() {
            out.push((format!("head.ln.{k}"), p));
        }
        for (i, d) in self.head.hidden.iter().enumerate() {
            for (k, p) in d.named() {
                out.push((format!("head.hidden.{i}.{k}"), p));
            }
        }
        for (k, p) in self.head.out.named() {
            out.push((format!("head.out.{k}"), p));
        }
        out
    }

    /// Mutable parameters in the same order as [`named`](Self::named).
    pub fn params_mut(&mut self) -> Vec<&mut P> {
        let mut out: Vec<&mut P> = Vec::new();
        out.extend(self.embed.named_mut().into_iter().map(|(_, p)| p));
        for layer in &mut self.layers {
            out.extend(layer.named_mut().into_iter().map(|(_, p)| p));
        }
        out.extend(self.head.norm.named_mut().into_iter().map(|(_, p)| p));
        for d in &mut self.head.hidden {
            out.extend(d.named_mut().into_iter().map(|(_, p)| p));
        }
        out.extend(self.head.out.named_mut().into_iter().map(|(_, p)| p));
        out
    }

    pub fn map<Q>(&self, mut f: impl FnMut(&P) -> Q) -> FfvtParams<Q> {
        FfvtParams {
            embed: self.embed.map(&mut f),
            layers: self.layers.iter().map(|l| l.map(&mut f)).collect(),
            head: ClassifierHead {
                norm: self.head.norm.map(&mut f),
                hidden: self.head.hidden.iter().map(|d| d.map(&mut f)).collect(),
                out: self.head.out.map(&mut f),
            },
        }
    }
}

/// Input of the final layer plus where each row came from.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedSequence<T> {
    pub tokens: Tensor<T>,
    /// `(layer_index, token_index)` per row; row 0 is `(L-1, 0)`.
    pub provenance: Vec<(usize, usize)>,
}

/// Value outputs of one forward pass.
#[derive(Clone, Debug)]
pub struct FfvtOutput<T> {
    pub logits: Tensor<T>,
    pub trace: EncoderTrace<T>,
    pub selections: Vec<SelectionResult>,
    pub fused: FusedSequence<T>,
}

/// Tape-level outputs of one forward pass.
#[derive(Clone, Debug)]
pub struct TapeForward<T> {
    pub logits: Var,
    pub trace: TapeTrace<T>,
    pub selections: Vec<SelectionResult>,
    pub fused: Var,
    pub provenance: Vec<(usize, usize)>,
}

/// Row plan for the fused sequence. `layers` is the number of traced layers
/// (L-1) and `rows` the token count of each hidden state.
fn fusion_plan(layers: usize, rows: usize, selections: &[SelectionResult]) -> Result<Vec<(usize, usize)>> {
    if layers == 0 {
        return Err(Error::dim("fusion needs at least one traced layer"));
    }
    if selections.len() != layers {
        return Err(Error::Index(format!("{} selections for {layers} traced layers", selections.len())));
    }
    let mut plan = vec![(layers, 0)];
    for (l, sel) in selections.iter().enumerate() {
        if sel.layer_index != l + 1 {
            return Err(Error::Index(format!("selection {l} is tagged layer {}, expected {}", sel.layer_index, l + 1)));
        }
        for &i in &sel.indices {
            if i == 0 || i >= rows {
                return Err(Error::Index(format!("selected token {i} at layer {} outside 1..{rows}", l + 1)));
            }
            plan.push((l + 1, i));
        }
    }
    Ok(plan)
}

fn pass_through_plan(layers: usize, rows: usize) -> Vec<(usize, usize)> {
    (0..rows).map(|i| (layers, i)).collect()
}

/// Copies the fused rows out of a value trace.
pub fn fuse<T: Scalar>(trace: &EncoderTrace<T>, selections: &[SelectionResult]) -> Result<FusedSequence<T>> {
    let layers = trace.hidden.len();
    let (rows, d) = trace.hidden.first().ok_or_else(|| Error::dim("empty trace"))?.dims2()?;
    let plan = fusion_plan(layers, rows, selections)?;
    let mut data = Vec::with_capacity(plan.len() * d);
    for &(l, i) in &plan {
        data.extend_from_slice(trace.hidden[l - 1].row(i));
    }
    Ok(FusedSequence { tokens: Tensor::from_parts(vec![plan.len(), d], data), provenance: plan })
}

fn gather_plan<T: Scalar>(tape: &mut Tape<T>, hidden: &[Var], plan: &[(usize, usize)]) -> Result<Var> {
    let mut parts = Vec::new();
    let mut start = 0;
    while start < plan.len() {
        let layer = plan[start].0;
        let mut end = start;
        while end < plan.len() && plan[end].0 == layer {
            end += 1;
        }
        let rows: Vec<usize> = plan[start..end].iter().map(|p| p.1).collect();
        parts.push(tape.gather_rows(hidden[layer - 1], &rows)?);
        start = end;
    }
    if parts.len() == 1 {
        Ok(parts[0])
    } else {
        tape.concat_rows(&parts)
    }
}

fn apply_head<T: Scalar>(tape: &mut Tape<T>, z: Var, head: &ClassifierHead<Var>) -> Result<Var> {
    let cls = tape.gather_rows(z, &[0])?;
    let mut h = tape.layer_norm(cls, head.norm.gamma, head.norm.beta, c(LN_EPS))?;
    for d in &head.hidden {
        let x = tape.matmul(h, d.w)?;
        let x = tape.add_row(x, d.b)?;
        h = tape.gelu(x)?;
    }
    let x = tape.matmul(h, head.out.w)?;
    let x = tape.add_row(x, head.out.b)?;
    let n = tape.value(x).numel();
    tape.reshape(x, &[n])
}

fn check_image<T: Scalar>(cfg: &ModelConfig, image: &Tensor<T>) -> Result<()> {
    let want = [cfg.image_h, cfg.image_w, cfg.channels];
    if image.shape() != want {
        return Err(Error::dim(format!("image shape {:?} does not match model input {want:?}", image.shape())));
    }
    Ok(())
}

fn embed_image<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    params: &FfvtParams<Var>,
    image: &Tensor<T>,
) -> Result<Var> {
    check_image(cfg, image)?;
    let patches = patchify(image, cfg.patch_size)?;
    let pv = tape.constant(patches);
    embed(tape, pv, &params.embed)
}

/// Full FFVT forward on a tape.
///
/// With `frozen` the given selections are used instead of recomputing them,
/// which keeps indices fixed during finite-difference perturbation. Under
/// [`SelectorKind::None`] the final layer receives the whole sequence of
/// layer L-1, which is exactly the plain ViT.
pub fn ffvt_forward_tape<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    params: &FfvtParams<Var>,
    image: &Tensor<T>,
    frozen: Option<&[SelectionResult]>,
) -> Result<TapeForward<T>> {
    let z0 = embed_image(tape, cfg, params, image)?;
    let (last, earlier) = params.layers.split_last().ok_or_else(|| Error::config("model has no layers"))?;
    let trace = forward_collect(tape, z0, earlier, cfg.heads)?;
    let selections = match frozen {
        Some(s) => s.to_vec(),
        None => select_per_layer(&trace.attention, cfg.k, cfg.selector)?,
    };
    let rows = cfg.seq_len();
    let provenance = match cfg.selector {
        SelectorKind::None => pass_through_plan(earlier.len(), rows),
        _ => fusion_plan(earlier.len(), rows, &selections)?,
    };
    let fused = gather_plan(tape, &trace.hidden, &provenance)?;
    let (out, _) = encoder_layer(tape, fused, last, cfg.heads, cfg.layers)?;
    let logits = apply_head(tape, out, &params.head)?;
    Ok(TapeForward { logits, trace, selections, fused, provenance })
}

/// Baseline: every layer on the full sequence, head on the class token.
pub fn plain_vit_forward_tape<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    params: &FfvtParams<Var>,
    image: &Tensor<T>,
) -> Result<Var> {
    let mut z = embed_image(tape, cfg, params, image)?;
    for (l, layer) in params.layers.iter().enumerate() {
        z = encoder_layer(tape, z, layer, cfg.heads, l + 1)?.0;
    }
    apply_head(tape, z, &params.head)
}

/// A configured model with stored weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Ffvt<T> {
    pub config: ModelConfig,
    pub params: FfvtParams<Tensor<T>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    dtype: DType,
    config: ModelConfig,
    params: BTreeMap<String, String>,
}

impl<T: Scalar> Ffvt<T> {
    /// Fresh weights drawn from the init stream of `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(SeedStreams::from_master(config.seed).init);
        let embed = PatchEmbedding::init(&config, &mut rng);
        let layers = (0..config.layers).map(|_| EncoderLayer::init(&config, &mut rng)).collect();
        let d = config.embed_dim;
        let hidden = (1..config.head_depth)
            .map(|_| Dense { w: trunc_normal(&mut rng, &[d, d], INIT_STD), b: Tensor::zeros([d]) })
            .collect();
        let head = ClassifierHead {
            norm: Norm { gamma: Tensor::ones([d]), beta: Tensor::zeros([d]) },
            hidden,
            out: Dense {
                w: trunc_normal(&mut rng, &[d, config.num_classes], INIT_STD),
                b: Tensor::zeros([config.num_classes]),
            },
        };
        Ok(Ffvt { config, params: FfvtParams { embed, layers, head } })
    }

    /// Records every parameter on `tape`, as trainable leaves or constants.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> FfvtParams<Var> {
        self.params.map(|t| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) })
    }

    pub fn num_params(&self) -> usize {
        self.params.named().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn forward(&self, image: &Tensor<T>) -> Result<FfvtOutput<T>> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let f = ffvt_forward_tape(&mut tape, &self.config, &params, image, None)?;
        Ok(FfvtOutput {
            logits: tape.value(f.logits).clone(),
            trace: f.trace.materialize(&tape),
            selections: f.selections,
            fused: FusedSequence { tokens: tape.value(f.fused).clone(), provenance: f.provenance },
        })
    }

    pub fn logits(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let f = ffvt_forward_tape(&mut tape, &self.config, &params, image, None)?;
        Ok(tape.value(f.logits).clone())
    }

    pub fn plain_vit_forward(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let logits = plain_vit_forward_tape(&mut tape, &self.config, &params, image)?;
        Ok(tape.value(logits).clone())
    }

    /// Converts storage precision.
    pub fn cast<U: Scalar>(&self) -> Ffvt<U> {
        Ffvt { config: self.config.clone(), params: self.params.map(|t| t.cast()) }
    }

    /// Writes one FTZ file per parameter plus `manifest.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut params = BTreeMap::new();
        for (name, t) in self.params.named() {
            let file = format!("{name}.ftz");
            ftz::write(dir.join(&file), t)?;
            params.insert(name, file);
        }
        let manifest = CheckpointManifest { dtype: T::DTYPE, config: self.config.clone(), params };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.json");
        let raw = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: CheckpointManifest =
            serde_json::from_slice(&raw).map_err(|e| Error::format(&path, format!("bad checkpoint manifest: {e}")))?;
        let mut model = Ffvt::<T>::new(manifest.config.clone())?;
        let names: Vec<String> = model.params.named().into_iter().map(|(n, _)| n).collect();
        if names.len() != manifest.params.len() {
            return Err(Error::config(format!(
                "checkpoint lists {} tensors, config implies {}",
                manifest.params.len(),
                names.len()
            )));
        }
        for (name, slot) in names.iter().zip(model.params.params_mut()) {
            let file = manifest
                .params
                .get(name)
                .ok_or_else(|| Error::config(format!("checkpoint is missing parameter {name}")))?;
            let t: Tensor<T> = ftz::read(dir.join(file))?;
            if t.shape() != slot.shape() {
                return Err(Error::config(format!(
                    "parameter {name} has shape {:?}, config expects {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        Ok(model)
    }
}
