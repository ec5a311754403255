//! Zero-block tagging between the Im2Col unit and the GEMM unit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Im2ColMatrix;

/// One bit per `block_size` run of a column along the shared dimension; a
/// clear bit means every covered element is zero. The last block of a column
/// may be short.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureBitmap {
    block_size: usize,
    blocks_per_col: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl FeatureBitmap {
    /// All blocks marked nonzero.
    pub fn dense(rows: usize, cols: usize, block_size: usize) -> Self {
        let blocks_per_col = rows.div_ceil(block_size.max(1));
        FeatureBitmap {
            block_size: block_size.max(1),
            blocks_per_col,
            cols,
            bits: vec![true; blocks_per_col * cols],
        }
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn blocks_per_col(&self) -> usize {
        self.blocks_per_col
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, col: usize, block: usize) -> bool {
        self.bits[col * self.blocks_per_col + block]
    }

    /// Bit covering shared-dimension position `pos` of column `col`.
    #[inline]
    pub fn covers_nonzero(&self, col: usize, pos: usize) -> bool {
        self.get(col, pos / self.block_size)
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Fraction of blocks tagged nonzero.
    pub fn density(&self) -> f64 {
        if self.bits.is_empty() {
            return 1.0;
        }
        self.ones() as f64 / self.bits.len() as f64
    }
}

pub fn compress_tile(tile: &Im2ColMatrix, block_size: usize) -> Result<FeatureBitmap> {
    if block_size == 0 {
        return Err(Error::InvalidConfig("compressor block size must be >= 1".into()));
    }
    let blocks_per_col = tile.rows().div_ceil(block_size);
    let mut bits = Vec::with_capacity(blocks_per_col * tile.cols());
    for j in 0..tile.cols() {
        bits.extend(tile.column(j).chunks(block_size).map(|b| b.iter().any(|&v| v != 0)));
    }
    Ok(FeatureBitmap {
        block_size,
        blocks_per_col,
        cols: tile.cols(),
        bits,
    })
}
