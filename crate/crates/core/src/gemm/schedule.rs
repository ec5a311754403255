//! Shared-dimension streaming order.

use crate::compressor::FeatureBitmap;
use crate::sparse::Bitmap;

/// Positions that enter the array for one tile, ascending. Position `j` is
/// skipped when weight column `j` is empty or when every column of the tile
/// has a zero block there.
pub fn schedule_positions(m1: &Bitmap, bitmap: &FeatureBitmap) -> Vec<usize> {
    (0..m1.len())
        .filter(|&j| m1[j] && (0..bitmap.cols()).any(|c| bitmap.covers_nonzero(c, j)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compressor::compress_tile;
    use crate::model::Im2ColMatrix;
    use proptest::prelude::*;

    #[test]
    fn empty_weights_stream_nothing() {
        let m1 = Bitmap::repeat(false, 16);
        assert!(schedule_positions(&m1, &FeatureBitmap::dense(16, 4, 8)).is_empty());
    }

    #[test]
    fn zero_half_is_skipped() {
        let m1 = Bitmap::repeat(true, 16);
        let mut data = vec![0i16; 32];
        data[8] = 1;
        data[16 + 15] = 1;
        let x = Im2ColMatrix::from_columns(16, 2, data).unwrap();
        let bm = compress_tile(&x, 8).unwrap();
        assert_eq!(schedule_positions(&m1, &bm), (8..16).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn streamed_positions_hold_every_nonzero_product(
            rows in 1usize..40,
            cols in 1usize..5,
            bz in 1usize..9,
            seed in any::<u64>(),
        ) {
            let mut s = seed;
            let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); s >> 33 };
            let data: Vec<i16> = (0..rows * cols).map(|_| if next() % 3 == 0 { (next() % 7) as i16 - 3 } else { 0 }).collect();
            let m1: Bitmap = (0..rows).map(|_| next() % 4 != 0).collect();
            let x = Im2ColMatrix::from_columns(rows, cols, data).unwrap();
            let bm = compress_tile(&x, bz).unwrap();
            let sched = schedule_positions(&m1, &bm);
            for j in 0..rows {
                let needed = m1[j] && (0..cols).any(|c| x.get(j, c) != 0);
                if needed {
                    prop_assert!(sched.contains(&j));
                }
                if sched.contains(&j) {
                    prop_assert!(m1[j]);
                }
            }
        }
    }
}
