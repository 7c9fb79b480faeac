//! `RNDT` tensor container.
//!
//! Layout: magic `RNDT`, version `u16`, dtype `u8` (0 = u8, 1 = f32,
//! 2 = f64), ndim `u8`, `ndim` little-endian `u32` dims, then the row-major
//! little-endian payload. Nothing may follow the payload.

use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RNDT";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    U8 = 0,
    F32 = 1,
    F64 = 2,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    U8(Vec<u8>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn dtype(&self) -> Dtype {
        match self {
            TensorData::U8(_) => Dtype::U8,
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::U8(v) => v.len(),
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values as `f64`; bytes are scaled by `1/255`.
    pub fn to_unit_f64(&self) -> Vec<f64> {
        match self {
            TensorData::U8(v) => v.iter().map(|&b| b as f64 / 255.0).collect(),
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub data: TensorData,
}

impl Tensor {
    pub fn new(dims: Vec<u32>, data: TensorData) -> Result<Self> {
        if dims.len() > u8::MAX as usize {
            return Err(Error::invalid("too many dimensions"));
        }
        let count: u64 = dims.iter().map(|&d| d as u64).product();
        if count != data.len() as u64 {
            return Err(Error::shape(count, data.len()));
        }
        Ok(Tensor { dims, data })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.dims.len() + self.data.len() * self.data.dtype().size());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.data.dtype() as u8);
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            TensorData::U8(v) => out.extend_from_slice(v),
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    /// Decodes one container occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (t, used) = Self::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(format_err(used, format!("{} trailing bytes", bytes.len() - used)));
        }
        Ok(t)
    }

    /// Decodes a container at the start of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(format_err(0, format!("bad magic {magic:?}")));
        }
        let version = u16::from_le_bytes(r.take(2, "version")?.try_into().expect("2 bytes"));
        if version != VERSION {
            return Err(format_err(4, format!("unsupported version {version}")));
        }
        let dtype = match r.take(1, "dtype")?[0] {
            0 => Dtype::U8,
            1 => Dtype::F32,
            2 => Dtype::F64,
            other => return Err(format_err(6, format!("unknown dtype code {other}"))),
        };
        let ndim = r.take(1, "ndim")?[0] as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(u32::from_le_bytes(r.take(4, "dims")?.try_into().expect("4 bytes")));
        }
        let count: u64 = dims.iter().map(|&d| d as u64).product();
        let need = count
            .checked_mul(dtype.size() as u64)
            .filter(|&n| n <= usize::MAX as u64)
            .ok_or_else(|| format_err(r.pos, "payload size overflows"))? as usize;
        let payload = r.take(need, "payload")?;
        let data = match dtype {
            Dtype::U8 => TensorData::U8(payload.to_vec()),
            Dtype::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect(),
            ),
            Dtype::F64 => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
        };
        Ok((Tensor { dims, data }, r.pos))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(format_err(
                self.bytes.len(),
                format!("truncated {what}: need {n} bytes at offset {}", self.pos),
            )),
        }
    }
}
