//! Output-stationary systolic GEMM.
//!
//! Weight rows stream in from the left, Im2Col columns from the top, and
//! every PE keeps its partial sums in its register slots until the tile is
//! done. Shared-dimension positions are skipped before they enter the array
//! when the weight column is empty (M1) or every active input column holds a
//! zero block there (feature bitmap). Remaining multiplications with a zero
//! operand are gated: they occupy the slot but do no MAC work.
//!
//! Per tile and pass: `cycles = streamed * r + active_rows + N`.

use serde::Serialize;

use crate::compressor::{compress_tile, FeatureBitmap};
use crate::error::{Error, Result};
use crate::gemm::config::{configure, ArrayConfig, Placement};
use crate::gemm::schedule::schedule_positions;
use crate::im2col::Tile;
use crate::model::{Im2ColMatrix, OutputMatrix};
use crate::sparse::{BlockIndex, BlockSparseWeights};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GemmStats {
    pub cycles: u64,
    pub tiles: usize,
    /// Tile x pass combinations, each a full sweep of the shared dimension.
    pub tile_passes: usize,
    pub streamed_positions: usize,
    pub skipped_by_m1: usize,
    pub skipped_by_feature_bitmap: usize,
    pub mac_ops: usize,
    pub gated_macs: usize,
    /// Weight values fetched from the SRAM banks.
    pub weight_reads: usize,
    /// Bitmap checks: one per shared-dimension position per tile pass.
    pub metadata_ops: usize,
    pub output_writes: usize,
    pub overflow_events: usize,
    pub row_occupancy: f64,
    /// Mean fraction of array columns carrying an input column.
    pub col_occupancy: f64,
    /// `mac_ops / (pe_count * cycles)`.
    pub mac_active_fraction: f64,
    pub pe_count: usize,
    #[serde(skip)]
    active_col_sum: usize,
}

impl GemmStats {
    fn finalize(&mut self, array_cols: usize) {
        self.col_occupancy = if self.tiles == 0 {
            0.0
        } else {
            self.active_col_sum as f64 / (self.tiles * array_cols) as f64
        };
        self.mac_active_fraction = if self.cycles == 0 || self.pe_count == 0 {
            0.0
        } else {
            self.mac_ops as f64 / (self.pe_count as f64 * self.cycles as f64)
        };
    }

    /// Combines sub-arrays that run side by side; cycles take the max.
    pub fn merge_parallel(&mut self, other: &GemmStats, array_cols: usize) {
        self.cycles = self.cycles.max(other.cycles);
        self.tiles += other.tiles;
        self.tile_passes += other.tile_passes;
        self.streamed_positions += other.streamed_positions;
        self.skipped_by_m1 += other.skipped_by_m1;
        self.skipped_by_feature_bitmap += other.skipped_by_feature_bitmap;
        self.mac_ops += other.mac_ops;
        self.gated_macs += other.gated_macs;
        self.weight_reads += other.weight_reads;
        self.metadata_ops += other.metadata_ops;
        self.output_writes += other.output_writes;
        self.overflow_events += other.overflow_events;
        self.active_col_sum += other.active_col_sum;
        self.finalize(array_cols);
    }

    /// Combines runs that happened one after another.
    pub fn merge_sequential(&mut self, other: &GemmStats, array_cols: usize) {
        let cycles = self.cycles + other.cycles;
        self.merge_parallel(other, array_cols);
        self.cycles = cycles;
        self.finalize(array_cols);
    }
}

/// One (sub-)array consuming a stream of compressed tiles.
pub struct GemmEngine<'w> {
    weights: &'w BlockSparseWeights,
    index: BlockIndex,
    placement: Placement,
    array_cols: usize,
    acc_width: crate::model::AccWidth,
    out: OutputMatrix,
    overflowed: Vec<bool>,
    stats: GemmStats,
}

impl<'w> GemmEngine<'w> {
    /// `total_cols` is the width of the full output matrix; tiles write the
    /// columns named by their `start`.
    pub fn new(weights: &'w BlockSparseWeights, total_cols: usize, cfg: &ArrayConfig) -> Result<Self> {
        let placement = configure(cfg, weights.filters())?;
        let stats = GemmStats {
            row_occupancy: placement.row_occupancy,
            pe_count: cfg.pe_count() / cfg.split_factor,
            ..GemmStats::default()
        };
        Ok(GemmEngine {
            weights,
            index: weights.block_index(),
            placement,
            array_cols: cfg.cols,
            acc_width: cfg.acc_width,
            out: OutputMatrix::zeros(weights.filters(), total_cols),
            overflowed: vec![false; weights.filters() * total_cols],
            stats,
        })
    }

    pub fn placement(&self) -> &Placement {
        &self.placement
    }

    /// Runs one tile through every pass; returns the cycles it took.
    pub fn consume(&mut self, tile: &Tile, bitmap: &FeatureBitmap) -> Result<u64> {
        let cols = &tile.columns;
        if cols.rows() != self.weights.cols() {
            return Err(Error::DimensionMismatch(format!(
                "tile has {} rows, weights have {} columns",
                cols.rows(),
                self.weights.cols()
            )));
        }
        if cols.cols() > self.array_cols {
            return Err(Error::DimensionMismatch(format!(
                "tile is {} columns wide, array has {}",
                cols.cols(),
                self.array_cols
            )));
        }
        if tile.start + cols.cols() > self.out.cols() {
            return Err(Error::DimensionMismatch(format!(
                "tile columns {}..{} outside the {}-column output",
                tile.start,
                tile.start + cols.cols(),
                self.out.cols()
            )));
        }
        if bitmap.cols() != cols.cols() || bitmap.blocks_per_col() != cols.rows().div_ceil(bitmap.block_size()) {
            return Err(Error::DimensionMismatch(
                "feature bitmap does not match its tile".into(),
            ));
        }

        let shared = cols.rows();
        let width = cols.cols();
        let group = self.weights.group();
        let positions = schedule_positions(self.weights.m1(), bitmap);
        let m1_zero = self.weights.m1().count_zeros();
        let total_cols = self.out.cols();
        let mut cycles = 0u64;
        let mut xs = vec![0i16; width];

        for pass in &self.placement.passes {
            let fr = pass.filters.clone();
            let first_block = fr.start / group;
            let last_block = (fr.end - 1) / group;
            for &j in &positions {
                for (c, x) in xs.iter_mut().enumerate() {
                    *x = cols.get(j, c);
                }
                for b in first_block..=last_block {
                    let rows = (b * group).max(fr.start)..((b + 1) * group).min(fr.end);
                    match self.weights.block_values(&self.index, j, b) {
                        None => self.stats.gated_macs += rows.len() * width,
                        Some(vals) => {
                            self.stats.weight_reads += rows.len();
                            for f in rows {
                                let w = i64::from(vals[f - b * group]);
                                for (c, &x) in xs.iter().enumerate() {
                                    if w == 0 || x == 0 {
                                        self.stats.gated_macs += 1;
                                        continue;
                                    }
                                    self.stats.mac_ops += 1;
                                    let o = f * total_cols + tile.start + c;
                                    let acc = &mut self.out.data_mut()[o];
                                    *acc += w * i64::from(x);
                                    if !self.acc_width.fits(*acc) {
                                        self.overflowed[o] = true;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            let streamed = positions.len();
            let feature_skips = shared - streamed - m1_zero;
            self.stats.streamed_positions += streamed;
            self.stats.skipped_by_m1 += m1_zero;
            self.stats.skipped_by_feature_bitmap += feature_skips;
            self.stats.metadata_ops += shared;
            self.stats.tile_passes += 1;
            cycles += (streamed * pass.rows_per_pe + pass.active_rows + self.array_cols) as u64;
        }
        self.stats.output_writes += self.weights.filters() * width;
        self.stats.tiles += 1;
        self.stats.active_col_sum += width;
        self.stats.cycles += cycles;
        Ok(cycles)
    }

    pub fn finish(mut self) -> (OutputMatrix, GemmStats) {
        let events = self.overflowed.iter().filter(|&&o| o).count();
        self.out.set_overflow_events(events);
        self.stats.overflow_events = events;
        self.stats.finalize(self.array_cols);
        (self.out, self.stats)
    }
}

fn check_weights(weights: &BlockSparseWeights, input: &Im2ColMatrix) -> Result<()> {
    if weights.cols() != input.rows() {
        return Err(Error::DimensionMismatch(format!(
            "weights have {} columns, input has {} rows",
            weights.cols(),
            input.rows()
        )));
    }
    Ok(())
}

/// Runs a whole input matrix through the array. In split mode sub-array `i`
/// takes output columns `[i*P/k, (i+1)*P/k)`; each sub-array cuts its range
/// into tiles of N columns, tags zero blocks of size `block_size`, and the
/// results are merged.
pub fn simulate_gemm(
    weights: &BlockSparseWeights,
    input: &Im2ColMatrix,
    block_size: usize,
    cfg: &ArrayConfig,
) -> Result<(OutputMatrix, GemmStats)> {
    check_weights(weights, input)?;
    let total = input.cols();
    let placement = configure(cfg, weights.filters())?;
    let mut out = OutputMatrix::zeros(weights.filters(), total);
    let mut merged: Option<GemmStats> = None;
    let mut overflow = 0;
    for i in 0..cfg.split_factor {
        let range = placement.column_range(i, total);
        let mut engine = GemmEngine::new(weights, total, cfg)?;
        let mut start = range.start;
        while start < range.end {
            let end = (start + cfg.cols).min(range.end);
            let tile = Tile {
                start,
                columns: input.slice_columns(start, end),
                cycles: 0,
            };
            let bitmap = compress_tile(&tile.columns, block_size)?;
            engine.consume(&tile, &bitmap)?;
            start = end;
        }
        let (part, stats) = engine.finish();
        overflow += part.overflow_events();
        for f in 0..weights.filters() {
            for p in range.clone() {
                out.set(f, p, part.get(f, p));
            }
        }
        match merged.as_mut() {
            None => merged = Some(stats),
            Some(m) => m.merge_parallel(&stats, cfg.cols),
        }
    }
    out.set_overflow_events(overflow);
    Ok((out, merged.unwrap_or_default()))
}

/// Fully connected layer: the features x batch input streams through the
/// array like an Im2Col matrix, batch samples occupying array columns.
pub fn simulate_fc(
    weights: &BlockSparseWeights,
    input: &Im2ColMatrix,
    block_size: usize,
    cfg: &ArrayConfig,
) -> Result<(OutputMatrix, GemmStats)> {
    if input.cols() == 0 {
        return Err(Error::Precondition("fully connected batch must be >= 1".into()));
    }
    simulate_gemm(weights, input, block_size, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gemm_reference, AccWidth, WeightMatrix};

    fn dense_weights(f: usize, k: usize) -> WeightMatrix {
        WeightMatrix::new(f, k, (0..f * k).map(|i| (i % 7) as i16 + 1).collect()).unwrap()
    }

    #[test]
    fn dense_tile_cycle_formula() {
        let w = dense_weights(128, 576);
        let s = BlockSparseWeights::encode(&w, 4, 4).unwrap();
        let x = Im2ColMatrix::from_columns(576, 4, vec![1; 576 * 4]).unwrap();
        let (out, stats) = simulate_gemm(&s, &x, 8, &ArrayConfig::default()).unwrap();
        assert_eq!(stats.cycles, 576 + 128 + 4);
        assert_eq!(stats.streamed_positions, 576);
        assert_eq!(out, gemm_reference(&w, &x, AccWidth::Bits32).unwrap());
    }

    #[test]
    fn half_positions_skipped() {
        let w = dense_weights(128, 576);
        let s = BlockSparseWeights::encode(&w, 4, 4).unwrap();
        let mut data = vec![0i16; 576 * 4];
        for c in 0..4 {
            for r in 288..576 {
                data[c * 576 + r] = (r % 5) as i16 - 2;
            }
        }
        let x = Im2ColMatrix::from_columns(576, 4, data).unwrap();
        let (out, stats) = simulate_gemm(&s, &x, 8, &ArrayConfig::default()).unwrap();
        assert_eq!(stats.streamed_positions, 288);
        assert_eq!(stats.skipped_by_feature_bitmap, 288);
        assert_eq!(stats.cycles, 288 + 132);
        assert_eq!(out, gemm_reference(&w, &x, AccWidth::Bits32).unwrap());
    }

    #[test]
    fn identity_passthrough() {
        let w = WeightMatrix::identity(6);
        let s = BlockSparseWeights::encode(&w, 2, 4).unwrap();
        let x = Im2ColMatrix::from_columns(6, 3, (1..=18).collect()).unwrap();
        let (out, _) = simulate_gemm(&s, &x, 4, &ArrayConfig::default()).unwrap();
        for r in 0..6 {
            for c in 0..3 {
                assert_eq!(out.get(r, c), x.get(r, c) as i64);
            }
        }
    }

    #[test]
    fn gating_counts() {
        // one zero weight and one zero input value among streamed positions
        let w = WeightMatrix::new(2, 2, vec![1, 0, 2, 3]).unwrap();
        let s = BlockSparseWeights::encode(&w, 1, 2).unwrap();
        let x = Im2ColMatrix::from_columns(2, 2, vec![1, 1, 0, 1]).unwrap();
        let (_, stats) = simulate_gemm(&s, &x, 1, &ArrayConfig::default()).unwrap();
        assert_eq!(stats.streamed_positions, 2);
        assert_eq!(stats.mac_ops + stats.gated_macs, 2 * 2 * 2);
        // zero x[0][1] gates both filters at position 0; the zero block
        // w[0][1] gates filter 0 on both columns at position 1
        assert_eq!(stats.gated_macs, 4);
    }

    #[test]
    fn split_mode_matches_tall() {
        let w = dense_weights(40, 27);
        let s = BlockSparseWeights::encode(&w, 4, 4).unwrap();
        let x = Im2ColMatrix::from_columns(27, 21, (0..27 * 21).map(|i| (i % 9) as i16 - 4).collect()).unwrap();
        let tall = simulate_gemm(&s, &x, 8, &ArrayConfig::default()).unwrap();
        for k in [2, 4] {
            let split = simulate_gemm(&s, &x, 8, &ArrayConfig::default().with_split(k)).unwrap();
            assert_eq!(split.0, tall.0);
            assert!(split.1.cycles <= tall.1.cycles);
        }
    }

    #[test]
    fn fc_column_occupancy() {
        let w = dense_weights(8, 16);
        let s = BlockSparseWeights::encode(&w, 4, 4).unwrap();
        let x4 = Im2ColMatrix::from_columns(16, 4, vec![1; 64]).unwrap();
        let (_, st) = simulate_fc(&s, &x4, 8, &ArrayConfig::default()).unwrap();
        assert_eq!(st.col_occupancy, 1.0);
        let x1 = Im2ColMatrix::from_columns(16, 1, vec![1; 16]).unwrap();
        let (_, st1) = simulate_fc(&s, &x1, 8, &ArrayConfig::default()).unwrap();
        assert_eq!(st1.col_occupancy, 0.25);
        assert!(st1.mac_active_fraction < st.mac_active_fraction);
    }

    #[test]
    fn fc_needs_batch() {
        let s = BlockSparseWeights::encode(&dense_weights(2, 3), 1, 1).unwrap();
        let x = Im2ColMatrix::zeros(3, 0);
        assert!(simulate_fc(&s, &x, 4, &ArrayConfig::default()).is_err());
    }

    #[test]
    fn overflow_events_match_reference() {
        let w = WeightMatrix::new(1, 4, vec![i16::MAX; 4]).unwrap();
        let s = BlockSparseWeights::encode(&w, 1, 1).unwrap();
        let x = Im2ColMatrix::from_columns(4, 2, vec![i16::MAX, i16::MAX, 0, 0, 1, 1, 1, 1]).unwrap();
        let cfg = ArrayConfig {
            acc_width: AccWidth::Bits24,
            ..ArrayConfig::default()
        };
        let (out, stats) = simulate_gemm(&s, &x, 2, &cfg).unwrap();
        let reference = gemm_reference(&w, &x, AccWidth::Bits24).unwrap();
        assert_eq!(out, reference);
        assert_eq!(stats.overflow_events, 1);
    }

    #[test]
    fn dimension_mismatch() {
        let s = BlockSparseWeights::encode(&dense_weights(2, 3), 1, 1).unwrap();
        let x = Im2ColMatrix::zeros(4, 1);
        assert!(matches!(
            simulate_gemm(&s, &x, 4, &ArrayConfig::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
