//! PFTN: a minimal little-endian tensor container.
//!
//! Layout:
//!
//! | bytes        | content                                        |
//! |--------------|------------------------------------------------|
//! | 4            | magic `PFTN`                                   |
//! | 1            | version, always 1                              |
//! | 1            | element type: 1 = f32, 2 = u16, 3 = u8         |
//! | 1            | rank, 1..=4                                    |
//! | 4 * rank     | dims as u32 LE                                 |
//! | elem * numel | row-major elements, little-endian              |
//!
//! A file must end exactly after the last element.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::StoreError;

pub const MAGIC: &[u8; 4] = b"PFTN";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemType {
    F32,
    U16,
    U8,
}

impl ElemType {
    pub fn code(self) -> u8 {
        match self {
            ElemType::F32 => 1,
            ElemType::U16 => 2,
            ElemType::U8 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(ElemType::F32),
            2 => Some(ElemType::U16),
            3 => Some(ElemType::U8),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            ElemType::F32 => 4,
            ElemType::U16 => 2,
            ElemType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U16(Vec<u16>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U16(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn elem_type(&self) -> ElemType {
        match self {
            TensorData::F32(_) => ElemType::F32,
            TensorData::U16(_) => ElemType::U16,
            TensorData::U8(_) => ElemType::U8,
        }
    }
}

/// Row-major tensor of rank 1..=4.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self, StoreError> {
        if dims.is_empty() || dims.len() > 4 {
            return Err(StoreError::BadRank(dims.len()));
        }
        if dims.iter().any(|&d| d == 0 || d > u32::MAX as usize) {
            return Err(StoreError::BadDim(dims.clone()));
        }
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(StoreError::ElementCountMismatch {
                expected,
                found: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn from_f32(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, StoreError> {
        Self::new(dims, TensorData::F32(data))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn elem_type(&self) -> ElemType {
        self.data.elem_type()
    }

    pub fn into_f32(self) -> Option<Vec<f32>> {
        match self.data {
            TensorData::F32(v) => Some(v),
            _ => None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let numel = self.data.len();
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.rank() + numel * self.elem_type().size());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.elem_type().code());
        out.push(self.rank() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        if bytes.len() < 4 {
            return Err(StoreError::Truncated {
                needed: HEADER_LEN,
                available: bytes.len(),
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(StoreError::BadMagic([bytes[0], bytes[1], bytes[2], bytes[3]]));
        }
        if bytes.len() < HEADER_LEN {
            return Err(StoreError::Truncated {
                needed: HEADER_LEN,
                available: bytes.len(),
            });
        }
        if bytes[4] != VERSION {
            return Err(StoreError::UnsupportedVersion(bytes[4]));
        }
        let elem = ElemType::from_code(bytes[5]).ok_or(StoreError::UnknownElemType(bytes[5]))?;
        let rank = bytes[6] as usize;
        if rank == 0 || rank > 4 {
            return Err(StoreError::BadRank(rank));
        }
        let dims_end = HEADER_LEN + 4 * rank;
        if bytes.len() < dims_end {
            return Err(StoreError::Truncated {
                needed: dims_end,
                available: bytes.len(),
            });
        }
        let dims: Vec<usize> = bytes[HEADER_LEN..dims_end]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect();
        if dims.contains(&0) {
            return Err(StoreError::BadDim(dims));
        }
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| StoreError::BadDim(dims.clone()))?;
        let payload = &bytes[dims_end..];
        let needed = numel * elem.size();
        if payload.len() < needed {
            return Err(StoreError::Truncated {
                needed: dims_end + needed,
                available: bytes.len(),
            });
        }
        if payload.len() > needed {
            return Err(StoreError::ElementCountMismatch {
                expected: numel,
                found: payload.len() / elem.size(),
            });
        }
        let data = match elem {
            ElemType::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
            ElemType::U16 => TensorData::U16(
                payload
                    .chunks_exact(2)
                    .map(|c| u16::from_le_bytes([c[0], c[1]]))
                    .collect(),
            ),
            ElemType::U8 => TensorData::U8(payload.to_vec()),
        };
        Tensor::new(dims, data)
    }
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| StoreError::io(path, e))?;
    f.write_all(&t.to_bytes()).map_err(|e| StoreError::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor, StoreError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| StoreError::io(path, e))?;
    Tensor::from_bytes(&bytes)
}
