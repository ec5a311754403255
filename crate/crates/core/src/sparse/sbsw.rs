//! SBSW v1 file layout (all integers little-endian):
//!
//! ```text
//! "SBSW" | version=1 | dtype=0 | rank=2 | 0 0 0
//! u32 F | u32 cols | u32 G | u32 bankCount
//! M1: ceil(cols/8) bytes
//! M2: ceil(popcount(M1) * ceil(F/G) / 8) bytes
//! bankCount x u32 value counts
//! values: int16, bank 0 first
//! ```
//!
//! Bitmaps are packed LSB-first: bit i lives in byte i/8 at bit i%8. Unused
//! trailing bits are zero.

use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::format::{Bitmap, BlockSparseWeights};
use crate::sparse::prune::blocks_per_column;

pub const MAGIC: &[u8; 4] = b"SBSW";
pub const VERSION: u8 = 1;

fn pack(bits: &Bitmap) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for i in bits.iter_ones() {
        out[i / 8] |= 1 << (i % 8);
    }
    out
}

fn unpack(bytes: &[u8], len: usize) -> Result<Bitmap> {
    let mut bits = Bitmap::with_capacity(len);
    for i in 0..len {
        bits.push(bytes[i / 8] >> (i % 8) & 1 == 1);
    }
    for i in len..bytes.len() * 8 {
        if bytes[i / 8] >> (i % 8) & 1 == 1 {
            return Err(Error::Format("nonzero padding bit in bitmap".into()));
        }
    }
    Ok(bits)
}

pub fn encode(s: &BlockSparseWeights) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, 0, 2, 0, 0, 0]);
    for v in [s.filters(), s.cols(), s.group(), s.bank_count()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend(pack(s.m1()));
    out.extend(pack(s.m2()));
    for bank in s.banks() {
        out.extend_from_slice(&(bank.len() as u32).to_le_bytes());
    }
    for bank in s.banks() {
        for v in bank {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated SBSW file at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode(bytes: &[u8]) -> Result<BlockSparseWeights> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let header = cur.take(10)?;
    if &header[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &header[..4])));
    }
    if header[4] != VERSION {
        return Err(Error::Format(format!("unsupported SBSW version {}", header[4])));
    }
    if header[5] != 0 || header[6] != 2 || header[7..] != [0, 0, 0] {
        return Err(Error::Format("unexpected SBSW header fields".into()));
    }
    let filters = cur.u32()?;
    let cols = cur.u32()?;
    let group = cur.u32()?;
    let bank_count = cur.u32()?;
    if group == 0 || bank_count == 0 {
        return Err(Error::Format("group size and bank count must be >= 1".into()));
    }
    let m1 = unpack(cur.take(cols.div_ceil(8))?, cols)?;
    let m2_len = m1.count_ones() * blocks_per_column(filters, group);
    let m2 = unpack(cur.take(m2_len.div_ceil(8))?, m2_len)?;
    let counts = (0..bank_count).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
    let mut banks = Vec::with_capacity(bank_count);
    for n in counts {
        let raw = cur.take(n.checked_mul(2).ok_or_else(|| Error::Format("bank too large".into()))?)?;
        banks.push(raw.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect());
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after SBSW payload",
            bytes.len() - cur.pos
        )));
    }
    BlockSparseWeights::from_parts(filters, cols, group, bank_count, m1, m2, banks)
}

pub fn read_file(path: impl AsRef<Path>) -> Result<BlockSparseWeights> {
    let path = path.as_ref();
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_file(path: impl AsRef<Path>, s: &BlockSparseWeights) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(s)).map_err(|e| Error::io(path, e))
}
