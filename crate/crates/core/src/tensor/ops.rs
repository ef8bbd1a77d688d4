//! Forward kernels. The tape wraps these and adds backward rules.

use super::{c, Scalar, Tensor};
use crate::error::{Error, Result};

pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(Error::dim(format!("matmul inner extents differ: {:?} x {:?}", a.shape(), b.shape())));
    }
    let mut out = vec![T::zero(); m * n];
    matmul_acc(a.data(), b.data(), &mut out, m, k, n);
    Ok(Tensor::from_parts(vec![m, n], out))
}

/// `out += a[m×k] · b[k×n]`
pub(crate) fn matmul_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
}

/// `out += a[m×k] · b[n×k]ᵀ`
pub(crate) fn matmul_nt_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let dot: T = a_row.iter().zip(b_row).map(|(&x, &y)| x * y).sum();
            out[i * n + j] = out[i * n + j] + dot;
        }
    }
}

/// `out += a[k×m]ᵀ · b[k×n]`
pub(crate) fn matmul_tn_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], k: usize, m: usize, n: usize) {
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            if av == T::zero() {
                continue;
            }
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
}

pub fn transpose<T: Scalar>(a: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, n) = a.dims2()?;
    let d = a.data();
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = d[i * n + j];
        }
    }
    Ok(Tensor::from_parts(vec![n, m], out))
}

fn same_shape<T: Scalar>(op: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!("{op}: shapes differ {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("add", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Ok(Tensor::from_parts(a.shape().to_vec(), data))
}

pub fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("mul", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    Ok(Tensor::from_parts(a.shape().to_vec(), data))
}

/// Adds a length-`n` vector to every length-`n` vector along the last axis.
pub fn add_row<T: Scalar>(a: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, n) = a.last_axis();
    if bias.numel() != n {
        return Err(Error::dim(format!(
            "add_row: bias {:?} does not match last axis of {:?}",
            bias.shape(),
            a.shape()
        )));
    }
    let b = bias.data();
    let data = a.data().chunks(n).flat_map(|row| row.iter().zip(b).map(|(&x, &y)| x + y)).collect();
    Ok(Tensor::from_parts(a.shape().to_vec(), data))
}

pub fn scale<T: Scalar>(a: &Tensor<T>, s: T) -> Tensor<T> {
    a.map(|x| x * s)
}

/// Numerically stable softmax of a slice.
pub fn softmax_slice<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    if v.is_empty() {
        return Err(Error::dim("softmax of an empty vector"));
    }
    let mut out = vec![T::zero(); v.len()];
    softmax_into(v, &mut out);
    Ok(out)
}

pub(crate) fn softmax_into<T: Scalar>(v: &[T], out: &mut [T]) {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - max).exp();
        sum = sum + *o;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
}

/// Softmax along the last axis.
pub fn softmax<T: Scalar>(v: &Tensor<T>) -> Result<Tensor<T>> {
    v.check_finite("softmax input")?;
    let (_, n) = v.last_axis();
    let mut out = vec![T::zero(); v.numel()];
    for (src, dst) in v.data().chunks(n).zip(out.chunks_mut(n)) {
        softmax_into(src, dst);
    }
    Ok(Tensor::from_parts(v.shape().to_vec(), out))
}

pub(crate) struct LayerNormOut<T> {
    pub out: Tensor<T>,
    /// Normalized input before the affine transform.
    pub xhat: Vec<T>,
    /// `1/sqrt(var + eps)` per vector.
    pub inv_std: Vec<T>,
}

pub(crate) fn layer_norm_full<T: Scalar>(
    v: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<LayerNormOut<T>> {
    let (rows, d) = v.last_axis();
    if v.rank() == 0 || d == 0 {
        return Err(Error::dim("layer_norm needs a non-empty last axis"));
    }
    if gamma.numel() != d || beta.numel() != d {
        return Err(Error::dim(format!(
            "layer_norm: gamma {:?} / beta {:?} do not match last axis {d}",
            gamma.shape(),
            beta.shape()
        )));
    }
    if !(eps > T::zero()) {
        return Err(Error::config("layer_norm eps must be positive"));
    }
    let dn: T = c(d as f64);
    let mut xhat = vec![T::zero(); v.numel()];
    let mut out = vec![T::zero(); v.numel()];
    let mut inv_std = Vec::with_capacity(rows);
    for r in 0..rows {
        let x = &v.data()[r * d..(r + 1) * d];
        let mean = x.iter().copied().sum::<T>() / dn;
        let var = x.iter().map(|&xi| (xi - mean) * (xi - mean)).sum::<T>() / dn;
        let is = T::one() / (var + eps).sqrt();
        inv_std.push(is);
        for j in 0..d {
            let h = (x[j] - mean) * is;
            xhat[r * d + j] = h;
            out[r * d + j] = h * gamma.data()[j] + beta.data()[j];
        }
    }
    Ok(LayerNormOut { out: Tensor::from_parts(v.shape().to_vec(), out), xhat, inv_std })
}

/// Layer normalization over the last axis with biased variance.
pub fn layer_norm<T: Scalar>(v: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    Ok(layer_norm_full(v, gamma, beta, eps)?.out)
}

/// Standard normal CDF through `erf`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub(crate) fn gelu_scalar<T: Scalar>(x: T) -> T {
    let xf = x.to_f64().unwrap_or(0.0);
    c(xf * normal_cdf(xf))
}

/// d/dx [x·Φ(x)] = Φ(x) + x·φ(x)
pub(crate) fn gelu_grad_scalar<T: Scalar>(x: T) -> T {
    let xf = x.to_f64().unwrap_or(0.0);
    let pdf = (-0.5 * xf * xf).exp() / (2.0 * std::f64::consts::PI).sqrt();
    c(normal_cdf(xf) + xf * pdf)
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu<T: Scalar>(v: &Tensor<T>) -> Result<Tensor<T>> {
    v.check_finite("gelu input")?;
    Ok(v.map(gelu_scalar))
}

/// Returns `(-log softmax(logits)[label], softmax(logits))` over all elements.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, label: usize) -> Result<(T, Vec<T>)> {
    let n = logits.numel();
    if label >= n {
        return Err(Error::Index(format!("label {label} out of range for {n} classes")));
    }
    logits.check_finite("cross_entropy logits")?;
    let x = logits.data();
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + x.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
    let probs = x.iter().map(|&v| (v - lse).exp()).collect();
    Ok((lse - x[label], probs))
}
