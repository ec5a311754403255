//! Bitmap block-sparse weight format.
//!
//! The dense F x cols matrix is cut into G x 1 blocks (G consecutive filters
//! in one column). `M1` holds one bit per column, set when the column has any
//! nonzero. `M2` holds one bit per block of every nonzero column, column after
//! column, top to bottom. Nonzero blocks are stored as G contiguous values
//! (a ragged last block is zero-padded) in bank `block_row % bank_count`, in
//! column-major scan order.

use bitvec::prelude::*;

use crate::error::{Error, Result};
use crate::model::WeightMatrix;
use crate::sparse::prune::blocks_per_column;

pub type Bitmap = BitVec<u8, Lsb0>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSparseWeights {
    filters: usize,
    cols: usize,
    group: usize,
    bank_count: usize,
    m1: Bitmap,
    m2: Bitmap,
    banks: Vec<Vec<i16>>,
}

/// Where one stored block lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockRef {
    pub bank: usize,
    pub offset: usize,
}

/// Per-column lookup of stored blocks, built by one scan over M1/M2.
#[derive(Debug, Clone)]
pub struct BlockIndex {
    blocks_per_col: usize,
    /// `column_base[j]` is the position of column j's first M2 bit, `None`
    /// for empty columns. This is the prefix popcount of M1 times blocks per
    /// column.
    column_base: Vec<Option<usize>>,
    blocks: Vec<Option<BlockRef>>,
}

impl BlockIndex {
    pub fn column_present(&self, col: usize) -> bool {
        self.column_base[col].is_some()
    }

    pub fn block(&self, col: usize, block_row: usize) -> Option<BlockRef> {
        self.column_base[col].and_then(|base| self.blocks[base + block_row])
    }

    pub fn blocks_per_col(&self) -> usize {
        self.blocks_per_col
    }
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedEncoding(msg.into())
}

impl BlockSparseWeights {
    pub fn encode(w: &WeightMatrix, group: usize, bank_count: usize) -> Result<Self> {
        if group == 0 || bank_count == 0 {
            return Err(Error::InvalidConfig("group size and bank count must be >= 1".into()));
        }
        let (rows, cols) = (w.rows(), w.cols());
        let nb = blocks_per_column(rows, group);
        let mut m1 = Bitmap::with_capacity(cols);
        let mut m2 = Bitmap::new();
        let mut banks = vec![Vec::new(); bank_count];
        for j in 0..cols {
            let nonzero_col = (0..rows).any(|r| w.get(r, j) != 0);
            m1.push(nonzero_col);
            if !nonzero_col {
                continue;
            }
            for b in 0..nb {
                let range = b * group..((b + 1) * group).min(rows);
                let nonzero_block = range.clone().any(|r| w.get(r, j) != 0);
                m2.push(nonzero_block);
                if nonzero_block {
                    let bank = &mut banks[b % bank_count];
                    bank.extend(range.clone().map(|r| w.get(r, j)));
                    bank.extend(std::iter::repeat_n(0, group - range.len()));
                }
            }
        }
        Ok(BlockSparseWeights {
            filters: rows,
            cols,
            group,
            bank_count,
            m1,
            m2,
            banks,
        })
    }

    /// Assembles an encoding from raw parts and checks it for consistency.
    pub fn from_parts(
        filters: usize,
        cols: usize,
        group: usize,
        bank_count: usize,
        m1: Bitmap,
        m2: Bitmap,
        banks: Vec<Vec<i16>>,
    ) -> Result<Self> {
        let s = BlockSparseWeights {
            filters,
            cols,
            group,
            bank_count,
            m1,
            m2,
            banks,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.group == 0 || self.bank_count == 0 {
            return Err(malformed("group size and bank count must be >= 1"));
        }
        if self.m1.len() != self.cols {
            return Err(malformed(format!(
                "M1 has {} bits for {} columns",
                self.m1.len(),
                self.cols
            )));
        }
        let nb = self.blocks_per_col();
        let nz_cols = self.m1.count_ones();
        if self.m2.len() != nz_cols * nb {
            return Err(malformed(format!(
                "M2 has {} bits, {nz_cols} nonzero columns x {nb} blocks need {}",
                self.m2.len(),
                nz_cols * nb
            )));
        }
        if self.banks.len() != self.bank_count {
            return Err(malformed(format!(
                "{} value banks for bank count {}",
                self.banks.len(),
                self.bank_count
            )));
        }
        let mut per_bank = vec![0usize; self.bank_count];
        for (k, chunk) in self.m2.chunks(nb.max(1)).enumerate() {
            if nb > 0 && chunk.not_any() {
                return Err(malformed(format!("nonzero column #{k} has no nonzero block in M2")));
            }
            for b in chunk.iter_ones() {
                per_bank[b % self.bank_count] += self.group;
            }
        }
        for (bank, (&want, have)) in per_bank.iter().zip(&self.banks).enumerate() {
            if want != have.len() {
                return Err(malformed(format!(
                    "bank {bank} holds {} values, M2 implies {want}",
                    have.len()
                )));
            }
        }
        Ok(())
    }

    pub fn decode(&self) -> Result<WeightMatrix> {
        self.validate()?;
        let index = self.block_index();
        let mut w = WeightMatrix::zeros(self.filters, self.cols);
        for j in 0..self.cols {
            for b in 0..self.blocks_per_col() {
                if let Some(r) = index.block(j, b) {
                    let vals = &self.banks[r.bank][r.offset..r.offset + self.group];
                    for (i, &v) in vals.iter().enumerate() {
                        let row = b * self.group + i;
                        if row < self.filters {
                            w.set(row, j, v);
                        } else if v != 0 {
                            return Err(malformed(format!(
                                "nonzero padding value in ragged block of column {j}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(w)
    }

    pub fn block_index(&self) -> BlockIndex {
        let nb = self.blocks_per_col();
        let mut column_base = Vec::with_capacity(self.cols);
        let mut blocks = Vec::with_capacity(self.m2.len());
        let mut fill = vec![0usize; self.bank_count];
        let mut next = 0;
        for j in 0..self.cols {
            if !self.m1[j] {
                column_base.push(None);
                continue;
            }
            column_base.push(Some(next));
            for b in 0..nb {
                if self.m2[next + b] {
                    let bank = b % self.bank_count;
                    blocks.push(Some(BlockRef {
                        bank,
                        offset: fill[bank],
                    }));
                    fill[bank] += self.group;
                } else {
                    blocks.push(None);
                }
            }
            next += nb;
        }
        BlockIndex {
            blocks_per_col: nb,
            column_base,
            blocks,
        }
    }

    /// Weight value at `(row, col)` resolved through `index`.
    #[inline]
    pub fn value(&self, index: &BlockIndex, row: usize, col: usize) -> i16 {
        let b = row / self.group;
        match index.block(col, b) {
            Some(r) => self.banks[r.bank][r.offset + row % self.group],
            None => 0,
        }
    }

    /// Stored block values for block row `b` of column `col`, if nonzero.
    pub fn block_values(&self, index: &BlockIndex, col: usize, b: usize) -> Option<&[i16]> {
        index
            .block(col, b)
            .map(|r| &self.banks[r.bank][r.offset..r.offset + self.group])
    }

    pub fn filters(&self) -> usize {
        self.filters
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn group(&self) -> usize {
        self.group
    }

    pub fn bank_count(&self) -> usize {
        self.bank_count
    }

    pub fn blocks_per_col(&self) -> usize {
        blocks_per_column(self.filters, self.group)
    }

    pub fn m1(&self) -> &Bitmap {
        &self.m1
    }

    pub fn m2(&self) -> &Bitmap {
        &self.m2
    }

    pub fn banks(&self) -> &[Vec<i16>] {
        &self.banks
    }

    pub fn nonzero_cols(&self) -> usize {
        self.m1.count_ones()
    }

    pub fn stored_values(&self) -> usize {
        self.banks.iter().map(Vec::len).sum()
    }

    /// Metadata plus values: `ceil(cols/8) + ceil(|M2|/8) + 2 * stored`.
    pub fn footprint_bytes(&self) -> usize {
        footprint_blocksparse(self.cols, self.m2.len(), self.stored_values())
    }
}

pub fn footprint_blocksparse(cols: usize, m2_bits: usize, stored_values: usize) -> usize {
    cols.div_ceil(8) + m2_bits.div_ceil(8) + 2 * stored_values
}

/// CSR baseline: 16-bit values, 32-bit column indices, 32-bit row pointers.
pub fn footprint_csr(w: &WeightMatrix) -> usize {
    csr_bytes(w.rows(), w.nnz())
}

pub fn csr_bytes(rows: usize, nnz: usize) -> usize {
    2 * nnz + 4 * nnz + 4 * (rows + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        #[rustfmt::skip]
        let w = WeightMatrix::new(4, 4, vec![
            0, 5, 1, 2,
            0, 6, 3, 4,
            0, 0, 5, 6,
            0, 0, 7, 8,
        ]).unwrap();
        let s = BlockSparseWeights::encode(&w, 2, 4).unwrap();
        assert_eq!(s.m1().iter().by_vals().collect::<Vec<_>>(), [false, true, true, true]);
        assert_eq!(
            s.m2().iter().by_vals().collect::<Vec<_>>(),
            [true, false, true, true, true, true]
        );
        // block row 0 -> bank 0, block row 1 -> bank 1
        assert_eq!(s.banks()[0], vec![5, 6, 1, 3, 2, 4]);
        assert_eq!(s.banks()[1], vec![5, 7, 6, 8]);
        assert!(s.banks()[2].is_empty() && s.banks()[3].is_empty());
        assert_eq!(s.decode().unwrap(), w);
    }

    #[test]
    fn all_zero() {
        let w = WeightMatrix::zeros(6, 5);
        let s = BlockSparseWeights::encode(&w, 4, 4).unwrap();
        assert!(s.m1().not_any());
        assert!(s.m2().is_empty());
        assert_eq!(s.stored_values(), 0);
        assert_eq!(s.decode().unwrap(), w);
        assert_eq!(s.footprint_bytes(), 1);
        assert_eq!(footprint_csr(&w), 4 * 7);
    }

    #[test]
    fn dense() {
        let w = WeightMatrix::new(4, 3, (1..=12).collect()).unwrap();
        let s = BlockSparseWeights::encode(&w, 2, 2).unwrap();
        assert!(s.m1().all());
        assert!(s.m2().all());
        assert_eq!(s.stored_values(), 12);
    }

    #[test]
    fn single_block_decodes_in_place() {
        let mut w = WeightMatrix::zeros(6, 3);
        w.set(2, 1, 7);
        w.set(3, 1, -2);
        let s = BlockSparseWeights::encode(&w, 2, 4).unwrap();
        assert_eq!(s.stored_values(), 2);
        assert_eq!(s.banks()[1], vec![7, -2]);
        assert_eq!(s.decode().unwrap(), w);
    }

    #[test]
    fn ragged_block_padded() {
        let w = WeightMatrix::new(3, 1, vec![1, 2, 3]).unwrap();
        let s = BlockSparseWeights::encode(&w, 2, 1).unwrap();
        assert_eq!(s.banks()[0], vec![1, 2, 3, 0]);
        assert_eq!(s.decode().unwrap(), w);
    }

    #[test]
    fn malformed_rejected() {
        let w = WeightMatrix::new(2, 2, vec![1, 0, 2, 3]).unwrap();
        let s = BlockSparseWeights::encode(&w, 1, 2).unwrap();
        let mut banks = s.banks().to_vec();
        banks[0].pop();
        let bad = BlockSparseWeights::from_parts(2, 2, 1, 2, s.m1().clone(), s.m2().clone(), banks);
        assert!(matches!(bad, Err(Error::MalformedEncoding(_))));

        let mut m2 = s.m2().clone();
        m2.push(true);
        let bad = BlockSparseWeights::from_parts(2, 2, 1, 2, s.m1().clone(), m2, s.banks().to_vec());
        assert!(bad.is_err());

        let mut m1 = s.m1().clone();
        m1.set(0, false);
        let bad = BlockSparseWeights::from_parts(2, 2, 1, 2, m1, s.m2().clone(), s.banks().to_vec());
        assert!(bad.is_err());
    }

    #[test]
    fn footprint_formulas() {
        let w = WeightMatrix::new(128, 576, vec![1; 128 * 576]).unwrap();
        let s = BlockSparseWeights::encode(&w, 4, 4).unwrap();
        assert_eq!(footprint_csr(&w), 442_884);
        // 576/8 + 576*32/8 + 2*73728
        assert_eq!(s.footprint_bytes(), 72 + 2_304 + 147_456);
    }
}
