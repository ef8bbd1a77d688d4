//! FTZ tensor files.
//!
//! Layout:
//!
//! ```text
//! offset  size  content
//! 0       8     magic b"FFVTTNSR"
//! 8       8     header length H, u64 little-endian
//! 16      H     UTF-8 JSON {"dtype":"f32"|"f64","shape":[...]}
//! 16+H    ...   row-major little-endian scalars
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DType, Scalar, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FFVTTNSR";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub dtype: DType,
    pub shape: Vec<usize>,
}

/// A tensor read from disk in its stored precision.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl StoredTensor {
    pub fn dtype(&self) -> DType {
        match self {
            StoredTensor::F32(_) => DType::F32,
            StoredTensor::F64(_) => DType::F64,
        }
    }

    pub fn into_tensor<T: Scalar>(self) -> Tensor<T> {
        match self {
            StoredTensor::F32(t) => t.cast(),
            StoredTensor::F64(t) => t.cast(),
        }
    }
}

pub fn encode<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let header = Header { dtype: T::DTYPE, shape: t.shape().to_vec() };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + t.numel() * T::DTYPE.size_of());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for &v in t.data() {
        v.write_le(&mut out);
    }
    out
}

pub fn decode(bytes: &[u8], origin: &Path) -> Result<StoredTensor> {
    let bad = |msg: &str| Error::format(origin, msg);
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing FFVTTNSR magic"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..).filter(|b| b.len() >= hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header =
        serde_json::from_slice(&body[..hlen]).map_err(|e| Error::format(origin, format!("bad header JSON: {e}")))?;
    let payload = &body[hlen..];
    let n: usize = header.shape.iter().product();
    if payload.len() != n * header.dtype.size_of() {
        return Err(Error::format(
            origin,
            format!(
                "payload has {} bytes, shape {:?} as {} needs {}",
                payload.len(),
                header.shape,
                header.dtype.name(),
                n * header.dtype.size_of()
            ),
        ));
    }
    let wrap = |e: Error| Error::format(origin, e.to_string());
    Ok(match header.dtype {
        DType::F32 => StoredTensor::F32(
            Tensor::new(header.shape, payload.chunks_exact(4).map(f32::read_le).collect()).map_err(wrap)?,
        ),
        DType::F64 => StoredTensor::F64(
            Tensor::new(header.shape, payload.chunks_exact(8).map(f64::read_le).collect()).map_err(wrap)?,
        ),
    })
}

pub fn write<T: Scalar>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}

pub fn read_stored(path: impl AsRef<Path>) -> Result<StoredTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Reads a tensor, converting to `T` if it was stored in the other precision.
pub fn read<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    Ok(read_stored(path)?.into_tensor())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_layout() {
        let t = Tensor::new([2], vec![1.0f32, -2.0]).unwrap();
        let b = encode(&t);
        let header = br#"{"dtype":"f32","shape":[2]}"#;
        assert_eq!(&b[..8], b"FFVTTNSR");
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), header.len() as u64);
        assert_eq!(&b[16..16 + header.len()], header);
        assert_eq!(&b[16 + header.len()..], &[0, 0, 0x80, 0x3f, 0, 0, 0, 0xc0]);
    }

    #[test]
    fn rejects_corruption() {
        let t = Tensor::new([3], vec![1.0f64, 2.0, 3.0]).unwrap();
        let mut b = encode(&t);
        let p = Path::new("mem");
        assert!(decode(&b[..b.len() - 1], p).is_err());
        b[0] = b'X';
        assert!(decode(&b, p).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(shape in proptest::collection::vec(1usize..5, 0..4), seed in any::<u64>()) {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = (0..n).map(|i| ((seed.wrapping_add(i as u64) % 1000) as f64) * 0.37 - 100.0).collect();
            let t = Tensor::new(shape.clone(), data).unwrap();
            let back = decode(&encode(&t), Path::new("mem")).unwrap();
            prop_assert_eq!(back, StoredTensor::F64(t.clone()));
            let t32: Tensor<f32> = t.cast();
            let back32 = decode(&encode(&t32), Path::new("mem")).unwrap();
            prop_assert_eq!(back32, StoredTensor::F32(t32));
        }
    }
}
