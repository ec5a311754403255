//! TensorBin v1: `"STNS"`, version, dtype (0 = int16), rank, three zero
//! bytes, `rank` little-endian u32 dims, then little-endian int16 payload with
//! the last dimension fastest.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{FeatureMap, WeightMatrix};

pub const MAGIC: &[u8; 4] = b"STNS";
pub const VERSION: u8 = 1;
pub const DTYPE_I16: u8 = 0;
pub const HEADER_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<i16>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<i16>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "tensor dims {dims:?} need {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    /// Interprets a rank-3 `(C, H, W)` tensor as one map, or a rank-4
    /// `(B, C, H, W)` tensor as a batch.
    pub fn into_feature_maps(self) -> Result<Vec<FeatureMap>> {
        match self.dims[..] {
            [c, h, w] => Ok(vec![FeatureMap::new(c, h, w, self.data)?]),
            [b, c, h, w] => {
                let per = c * h * w;
                (0..b)
                    .map(|i| FeatureMap::new(c, h, w, self.data[i * per..(i + 1) * per].to_vec()))
                    .collect()
            }
            _ => Err(Error::Format(format!(
                "expected a rank-3 or rank-4 feature tensor, got dims {:?}",
                self.dims
            ))),
        }
    }

    pub fn from_feature_maps(maps: &[FeatureMap]) -> Result<Self> {
        match maps {
            [] => Err(Error::Format("no feature maps to write".into())),
            [one] => {
                let (c, h, w) = one.dims();
                Tensor::new(vec![c, h, w], one.data().to_vec())
            }
            many => {
                let (c, h, w) = many[0].dims();
                let mut data = Vec::with_capacity(many.len() * c * h * w);
                for m in many {
                    if m.dims() != (c, h, w) {
                        return Err(Error::DimensionMismatch("batch maps differ in shape".into()));
                    }
                    data.extend_from_slice(m.data());
                }
                Tensor::new(vec![many.len(), c, h, w], data)
            }
        }
    }

    /// Rank-2 `(rows, cols)` tensors are weight matrices directly; rank-4
    /// `(F, C, R, S)` filter tensors are flattened in canonical order, which
    /// is the same memory layout.
    pub fn into_weight_matrix(self) -> Result<WeightMatrix> {
        match self.dims[..] {
            [rows, cols] => WeightMatrix::new(rows, cols, self.data),
            [f, c, r, s] => WeightMatrix::new(f, c * r * s, self.data),
            _ => Err(Error::Format(format!(
                "expected a rank-2 or rank-4 weight tensor, got dims {:?}",
                self.dims
            ))),
        }
    }
}

pub fn encode(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * t.rank() + 2 * t.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, DTYPE_I16, t.rank() as u8, 0, 0, 0]);
    for &d in &t.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let fmt = |m: String| Error::Format(m);
    if bytes.len() < HEADER_LEN {
        return Err(fmt(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(fmt(format!("bad magic {:?}", &bytes[..4])));
    }
    if bytes[4] != VERSION {
        return Err(fmt(format!("unsupported version {}", bytes[4])));
    }
    if bytes[5] != DTYPE_I16 {
        return Err(fmt(format!("unsupported dtype {}", bytes[5])));
    }
    if bytes[7..10] != [0, 0, 0] {
        return Err(fmt("reserved header bytes are not zero".into()));
    }
    let rank = bytes[6] as usize;
    let dims_end = HEADER_LEN + 4 * rank;
    if bytes.len() < dims_end {
        return Err(fmt("truncated dims".into()));
    }
    let dims: Vec<usize> = bytes[HEADER_LEN..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| fmt("dims overflow".into()))?;
    let payload = &bytes[dims_end..];
    if payload.len() != 2 * n {
        return Err(fmt(format!(
            "payload is {} bytes, dims {dims:?} need {}",
            payload.len(),
            2 * n
        )));
    }
    let data = payload
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect();
    Ok(Tensor { dims, data })
}

pub fn write(mut w: impl Write, t: &Tensor) -> std::io::Result<()> {
    w.write_all(&encode(t))
}

pub fn read(mut r: impl Read) -> Result<Tensor> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| Error::Format(format!("read failed: {e}")))?;
    decode(&buf)
}

pub fn read_file(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write_file(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}
