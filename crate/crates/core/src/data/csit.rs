//! CSIT binary tensor files.
//!
//! Layout, all integers little-endian:
//!
//! | offset    | size       | content                               |
//! |-----------|------------|---------------------------------------|
//! | 0         | 4          | magic `CSIT`                          |
//! | 4         | 1          | version, currently 1                  |
//! | 5         | 1          | dtype: 0 = f32, 1 = f64               |
//! | 6         | 1          | ndim                                  |
//! | 7         | 8 · ndim   | extents as u64, each ≥ 1              |
//! | 7 + 8·ndim| ...        | row-major payload                     |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DType, Element, Tensor};

pub const MAGIC: &[u8; 4] = b"CSIT";
pub const VERSION: u8 = 1;

/// A tensor of either supported element type, as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn dtype(&self) -> DType {
        match self {
            AnyTensor::F32(_) => DType::F32,
            AnyTensor::F64(_) => DType::F64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.shape(),
            AnyTensor::F64(t) => t.shape(),
        }
    }

    pub fn into_f32(self) -> Tensor<f32> {
        match self {
            AnyTensor::F32(t) => t,
            AnyTensor::F64(t) => t.cast(),
        }
    }

    pub fn into_f64(self) -> Tensor<f64> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t,
        }
    }

    /// The stored tensor if it has element type `T`.
    pub fn into_typed<T: Element>(self) -> Result<Tensor<T>> {
        let found = self.dtype();
        let wrong = || Error::Format { offset: 5, message: format!("expected dtype {:?}, found {found:?}", T::DTYPE) };
        match self {
            AnyTensor::F32(t) if T::DTYPE == DType::F32 => Ok(t.cast()),
            AnyTensor::F64(t) if T::DTYPE == DType::F64 => Ok(t.cast()),
            _ => Err(wrong()),
        }
    }
}

impl<T: Element> From<Tensor<T>> for AnyTensor {
    fn from(t: Tensor<T>) -> Self {
        match T::DTYPE {
            DType::F32 => AnyTensor::F32(t.cast()),
            DType::F64 => AnyTensor::F64(t.cast()),
        }
    }
}

pub fn write_csit<T: Element>(tensor: &Tensor<T>) -> Vec<u8> {
    let header = 7 + 8 * tensor.ndim();
    let mut out = Vec::with_capacity(header + tensor.len() * T::DTYPE.size());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(T::DTYPE.code());
    out.push(u8::try_from(tensor.ndim()).expect("at most 255 axes"));
    for &d in tensor.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in tensor.data() {
        v.write_le(&mut out);
    }
    out
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format { offset: offset as u64, message: message.into() }
}

fn decode<T: Element>(shape: Vec<usize>, payload: &[u8]) -> Result<Tensor<T>> {
    let data = payload.chunks_exact(T::DTYPE.size()).map(T::read_le).collect();
    Tensor::new(shape, data)
}

pub fn read_csit(bytes: &[u8]) -> Result<AnyTensor> {
    if bytes.len() < 7 {
        return Err(format_err(bytes.len(), "truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(format_err(0, format!("bad magic {:?}", &bytes[..4])));
    }
    if bytes[4] != VERSION {
        return Err(format_err(4, format!("unsupported version {}", bytes[4])));
    }
    let dtype = DType::from_code(bytes[5]).ok_or_else(|| format_err(5, format!("unknown dtype code {}", bytes[5])))?;
    let ndim = bytes[6] as usize;
    if ndim == 0 {
        return Err(format_err(6, "zero-dimensional tensor"));
    }
    let header = 7 + 8 * ndim;
    if bytes.len() < header {
        return Err(format_err(bytes.len(), format!("truncated header: {ndim} extents need {header} bytes")));
    }
    let mut shape = Vec::with_capacity(ndim);
    let mut numel: usize = 1;
    for i in 0..ndim {
        let at = 7 + 8 * i;
        let raw = u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
        if raw == 0 {
            return Err(format_err(at, format!("extent {i} is zero")));
        }
        let d = usize::try_from(raw).map_err(|_| format_err(at, format!("extent {i} = {raw} overflows")))?;
        numel = numel
            .checked_mul(d)
            .filter(|n| n.checked_mul(dtype.size()).is_some())
            .ok_or_else(|| format_err(at, format!("extent {i} = {raw} overflows the element count")))?;
        shape.push(d);
    }
    let expected = numel * dtype.size();
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(format_err(
            bytes.len(),
            format!("truncated payload: expected {expected} bytes, found {}", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(format_err(header + expected, "trailing bytes after payload"));
    }
    Ok(match dtype {
        DType::F32 => AnyTensor::F32(decode(shape, payload)?),
        DType::F64 => AnyTensor::F64(decode(shape, payload)?),
    })
}

pub fn save_csi_tensor<T: Element>(path: impl AsRef<Path>, tensor: &Tensor<T>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_csit(tensor)).map_err(|e| Error::io(path, e))
}

pub fn load_csi_tensor(path: impl AsRef<Path>) -> Result<AnyTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_csit(&bytes)
}
