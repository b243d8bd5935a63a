//! Raw tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "LGMC" | version u8 (0x01) | dtype u8 (0x01 f32, 0x02 f64) | rank u8
//!        | rank × u32 extents | row-major payload
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const MAGIC: &[u8; 4] = b"LGMC";
pub const VERSION: u8 = 0x01;

/// A tensor of either supported precision, as read from a container.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn dims(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.dims(),
            AnyTensor::F64(t) => t.dims(),
        }
    }

    pub fn to_f32(&self) -> Result<Tensor<f32>> {
        match self {
            AnyTensor::F32(t) => Ok(t.clone()),
            AnyTensor::F64(t) => t.cast(),
        }
    }

    pub fn to_f64(&self) -> Result<Tensor<f64>> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => Ok(t.clone()),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        match self {
            AnyTensor::F32(t) => encode(t),
            AnyTensor::F64(t) => encode(t),
        }
    }
}

impl From<Tensor<f32>> for AnyTensor {
    fn from(t: Tensor<f32>) -> Self {
        AnyTensor::F32(t)
    }
}

impl From<Tensor<f64>> for AnyTensor {
    fn from(t: Tensor<f64>) -> Self {
        AnyTensor::F64(t)
    }
}

pub fn encode<T: Real>(t: &Tensor<T>) -> Result<Vec<u8>> {
    let rank = u8::try_from(t.rank())
        .map_err(|_| Error::Format(format!("rank {} does not fit in one byte", t.rank())))?;
    let mut out = Vec::with_capacity(7 + 4 * t.rank() + T::BYTES * t.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(T::DTYPE);
    out.push(rank);
    for &d in t.dims() {
        let d = u32::try_from(d)
            .map_err(|_| Error::Format(format!("extent {d} does not fit in u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut out);
    }
    Ok(out)
}

fn need(bytes: &[u8], n: usize) -> Result<()> {
    if bytes.len() < n {
        Err(Error::Truncated {
            expected: n,
            found: bytes.len(),
        })
    } else {
        Ok(())
    }
}

fn decode_payload<T: Real>(dims: Vec<usize>, payload: &[u8]) -> Result<Tensor<T>> {
    let n: usize = dims.iter().product();
    let want = n
        .checked_mul(T::BYTES)
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    if payload.len() < want {
        return Err(Error::Truncated {
            expected: want,
            found: payload.len(),
        });
    }
    if payload.len() > want {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            payload.len() - want
        )));
    }
    let data = payload.chunks_exact(T::BYTES).map(T::read_le).collect();
    Tensor::new(dims, data).map_err(|e| match e {
        Error::Shape(m) => Error::Format(m),
        other => other,
    })
}

pub fn decode(bytes: &[u8]) -> Result<AnyTensor> {
    need(bytes, 7)?;
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected \"LGMC\"".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {:#04x}", bytes[4])));
    }
    let dtype = bytes[5];
    let rank = bytes[6] as usize;
    if rank == 0 {
        return Err(Error::Format("rank must be at least 1".into()));
    }
    let header = 7 + 4 * rank;
    need(bytes, header)?;
    let dims: Vec<usize> = bytes[7..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    if dims.contains(&0) {
        return Err(Error::Format(format!("zero extent in dims {dims:?}")));
    }
    let payload = &bytes[header..];
    match dtype {
        0x01 => decode_payload::<f32>(dims, payload).map(AnyTensor::F32),
        0x02 => decode_payload::<f64>(dims, payload).map(AnyTensor::F64),
        other => Err(Error::Format(format!("unknown dtype tag {other:#04x}"))),
    }
}

pub fn read_file(path: impl AsRef<Path>) -> Result<AnyTensor> {
    decode(&std::fs::read(path)?)
}

pub fn write_file<T: Real>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    std::fs::write(path, encode(t)?)?;
    Ok(())
}
