//! Token selection from attention score matrices.
//!
//! Both selectors read an (N+1)×(N+1) head-averaged score matrix `A` whose
//! row and column 0 belong to the class token, and return the K patch tokens
//! (indices `1..=N`) with the highest score:
//!
//! * SAWS ranks by the class-token row `a_0` alone.
//! * MAWS ranks by `ma_i = softmax(a_0)_i · softmax(b_0)_i`, where `b_0` is
//!   column 0 and both softmaxes run over all N+1 entries.
//!
//! Ties go to the lower index. The class token itself is never a candidate.
//! All arithmetic is done in `f64` regardless of the tensor precision.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ops::softmax_slice;
use crate::tensor::{Scalar, Tensor};
use crate::vit::{AttentionRecord, SelectorKind};

/// The K tokens picked from one layer, best first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    #[serde(rename = "layer")]
    pub layer_index: usize,
    pub kind: SelectorKind,
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Elementwise mean of equally shaped score matrices.
pub fn head_average<T: Scalar>(heads: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = heads.first().ok_or_else(|| Error::dim("head_average of zero heads"))?;
    let mut sum = vec![0.0f64; first.numel()];
    for h in heads {
        if h.shape() != first.shape() {
            return Err(Error::dim(format!("head shapes differ: {:?} vs {:?}", h.shape(), first.shape())));
        }
        for (s, x) in sum.iter_mut().zip(h.to_f64_vec()) {
            *s += x;
        }
    }
    let n = heads.len() as f64;
    Tensor::new(first.shape().to_vec(), sum.into_iter().map(|s| T::from_f64_lossy(s / n)).collect())
}

fn check_matrix<T: Scalar>(a: &Tensor<T>, k: usize) -> Result<usize> {
    let (r, c) = a.dims2()?;
    if r != c || r < 2 {
        return Err(Error::dim(format!("score matrix must be square with at least 2 rows, got {:?}", a.shape())));
    }
    let n = r - 1;
    if k == 0 || k > n {
        return Err(Error::config(format!("k = {k} must be in 1..={n}")));
    }
    Ok(n)
}

/// Top-`k` candidates `1..=n` by descending score, lower index on ties.
fn top_k(score: impl Fn(usize) -> f64, n: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (1..=n).collect();
    idx.sort_by(|&i, &j| score(j).total_cmp(&score(i)).then(i.cmp(&j)));
    idx.truncate(k);
    idx
}

/// Ranks patch tokens by the class-token row; weights are `softmax(a_0)` at
/// the chosen indices.
pub fn saws<T: Scalar>(a: &Tensor<T>, k: usize) -> Result<SelectionResult> {
    let n = check_matrix(a, k)?;
    let row0: Vec<f64> = a.row(0).iter().map(|x| x.to_f64().unwrap()).collect();
    let soft = softmax_slice(&row0)?;
    let indices = top_k(|i| row0[i], n, k);
    let weights = indices.iter().map(|&i| soft[i]).collect();
    Ok(SelectionResult { layer_index: 0, kind: SelectorKind::Saws, indices, weights })
}

/// `ma_i = a'_{0,i} · b'_{i,0}` for `i` in `1..=N`.
pub fn mutual_attention<T: Scalar>(a: &Tensor<T>) -> Result<Vec<f64>> {
    let (r, c) = a.dims2()?;
    if r != c {
        return Err(Error::dim(format!("score matrix must be square, got {:?}", a.shape())));
    }
    let row0: Vec<f64> = a.row(0).iter().map(|x| x.to_f64().unwrap()).collect();
    let col0: Vec<f64> = (0..r).map(|i| a.at(i, 0).to_f64().unwrap()).collect();
    let ra = softmax_slice(&row0)?;
    let cb = softmax_slice(&col0)?;
    Ok((0..r).map(|i| if i == 0 { 0.0 } else { ra[i] * cb[i] }).collect())
}

/// Ranks patch tokens by mutual attention weight.
pub fn maws<T: Scalar>(a: &Tensor<T>, k: usize) -> Result<SelectionResult> {
    let n = check_matrix(a, k)?;
    let ma = mutual_attention(a)?;
    let indices = top_k(|i| ma[i], n, k);
    let weights = indices.iter().map(|&i| ma[i]).collect();
    Ok(SelectionResult { layer_index: 0, kind: SelectorKind::Maws, indices, weights })
}

/// Dispatches on `kind`. `None` returns `1..=k` with uniform weights.
pub fn select<T: Scalar>(a: &Tensor<T>, k: usize, kind: SelectorKind) -> Result<SelectionResult> {
    match kind {
        SelectorKind::Saws => saws(a, k),
        SelectorKind::Maws => maws(a, k),
        SelectorKind::None => {
            check_matrix(a, k)?;
            Ok(SelectionResult { layer_index: 0, kind, indices: (1..=k).collect(), weights: vec![1.0 / k as f64; k] })
        }
    }
}

/// Applies the selector independently to each recorded layer.
pub fn select_per_layer<T: Scalar>(
    attention: &[AttentionRecord<T>],
    k: usize,
    kind: SelectorKind,
) -> Result<Vec<SelectionResult>> {
    attention
        .iter()
        .map(|rec| {
            let mut s = select(&rec.scores, k, kind)?;
            s.layer_index = rec.layer_index;
            Ok(s)
        })
        .collect()
}

/// One JSON object per line.
pub fn write_jsonl(path: impl AsRef<Path>, selections: &[SelectionResult]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in selections {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<SelectionResult>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
