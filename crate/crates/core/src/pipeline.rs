//! One layer through the accelerator.
//!
//! Each Im2Col unit produces tiles of N columns into a two-slot buffer; the
//! compressor tags each tile on its way in and the GEMM (sub-)array drains
//! it. Producer and consumer run on separate threads joined by a bounded
//! channel of depth two. Timing does not depend on thread scheduling: it is
//! recomputed from per-tile costs with the double-buffer recurrence
//!
//! ```text
//! p_i = max(p_{i-1}, c_{i-2}) + P_i
//! c_i = max(c_{i-1}, p_i)     + C_i
//! ```

use std::sync::mpsc::sync_channel;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::compressor::{compress_tile, FeatureBitmap};
use crate::error::{Error, Result};
use crate::gemm::{configure, simulate_fc, ArrayConfig, GemmEngine, GemmStats};
use crate::im2col::{simulate_pool, Im2ColConfig, Im2ColEngine, Im2ColMode, Im2ColStats, Tile};
use crate::model::{FeatureMap, Im2ColMatrix, LayerKind, LayerSpec, OutputMatrix};
use crate::sparse::BlockSparseWeights;

pub const BUFFER_SLOTS: usize = 2;

/// Accelerator parameters used while running a layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcceleratorConfig {
    pub array: ArrayConfig,
    /// Im2Col unit feeding the tall array (sub-array 0 in split mode).
    pub im2col: Im2ColConfig,
    /// The smaller units feeding sub-arrays 1.. in split mode.
    pub secondary_im2col: Im2ColConfig,
    /// Compressor block size Bz.
    pub block_size: usize,
}

impl Default for AcceleratorConfig {
    fn default() -> Self {
        AcceleratorConfig {
            array: ArrayConfig::default(),
            im2col: Im2ColConfig::default(),
            secondary_im2col: Im2ColConfig::default().with_pu_count(2),
            block_size: 8,
        }
    }
}

impl AcceleratorConfig {
    pub fn validate(&self) -> Result<()> {
        self.array.validate()?;
        self.im2col.validate()?;
        self.secondary_im2col.validate()?;
        if self.block_size == 0 {
            return Err(Error::InvalidConfig("compressor block size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn unit_config(&self, i: usize) -> &Im2ColConfig {
        if i == 0 {
            &self.im2col
        } else {
            &self.secondary_im2col
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CompressorStats {
    pub tiles: usize,
    pub blocks: usize,
    pub zero_blocks: usize,
}

impl CompressorStats {
    fn add(&mut self, b: &FeatureBitmap) {
        self.tiles += 1;
        self.blocks += b.len();
        self.zero_blocks += b.len() - b.ones();
    }

    fn merge(&mut self, o: &CompressorStats) {
        self.tiles += o.tiles;
        self.blocks += o.blocks;
        self.zero_blocks += o.zero_blocks;
    }
}

/// Finish times of a producer/consumer pair sharing `BUFFER_SLOTS` buffers.
pub fn overlap_cycles(produce: &[u64], consume: &[u64]) -> u64 {
    assert_eq!(produce.len(), consume.len());
    let mut p = vec![0u64; produce.len()];
    let mut c = vec![0u64; produce.len()];
    for i in 0..produce.len() {
        let prev_p = if i > 0 { p[i - 1] } else { 0 };
        let free = if i >= BUFFER_SLOTS { c[i - BUFFER_SLOTS] } else { 0 };
        p[i] = prev_p.max(free) + produce[i];
        let prev_c = if i > 0 { c[i - 1] } else { 0 };
        c[i] = prev_c.max(p[i]) + consume[i];
    }
    c.last().copied().unwrap_or(0)
}

/// Result of one layer on one input.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRun {
    pub output: FeatureMap,
    /// Raw accumulators for Conv/FC layers.
    pub accumulators: Option<OutputMatrix>,
    pub mode: Im2ColMode,
    pub cycles: u64,
    pub im2col: Im2ColStats,
    pub gemm: GemmStats,
    pub compressor: CompressorStats,
}

struct UnitRun {
    im2col: Im2ColStats,
    gemm: GemmStats,
    compressor: CompressorStats,
    out: OutputMatrix,
    cycles: u64,
    mode: Im2ColMode,
}

fn run_unit(
    x: &FeatureMap,
    layer: &LayerSpec,
    weights: &BlockSparseWeights,
    hw: &AcceleratorConfig,
    i: usize,
    range: std::ops::Range<usize>,
) -> Result<UnitRun> {
    let cfg = hw.unit_config(i);
    let mode = Im2ColMode::select(layer, cfg);
    let total = layer.patch_count();
    let mut engine = Im2ColEngine::new(x, layer, cfg, mode, range, hw.array.cols)?;
    let mut gemm = GemmEngine::new(weights, total, &hw.array)?;
    let block_size = hw.block_size;

    let (tx, rx) = sync_channel::<Result<(Tile, FeatureBitmap)>>(BUFFER_SLOTS);
    thread::scope(|s| {
        let producer = s.spawn(move || {
            for tile in engine.by_ref() {
                let item = compress_tile(&tile.columns, block_size).map(|b| (tile, b));
                let failed = item.is_err();
                if tx.send(item).is_err() || failed {
                    break;
                }
            }
            engine.finish()
        });

        let mut produce = Vec::new();
        let mut consume = Vec::new();
        let mut comp = CompressorStats::default();
        let mut err = None;
        for item in rx {
            match item.and_then(|(tile, bitmap)| {
                comp.add(&bitmap);
                gemm.consume(&tile, &bitmap).map(|c| (tile.cycles, c))
            }) {
                Ok((p, c)) => {
                    produce.push(p);
                    consume.push(c);
                }
                Err(e) => {
                    err = Some(e);
                    break;
                }
            }
        }
        let im2col = producer.join().expect("im2col producer panicked");
        if let Some(e) = err {
            return Err(e);
        }
        let (out, gstats) = gemm.finish();
        Ok(UnitRun {
            cycles: overlap_cycles(&produce, &consume),
            im2col,
            gemm: gstats,
            compressor: comp,
            out,
            mode,
        })
    })
}

/// Conv layer on one input: Im2Col -> compress -> GEMM, then bias, ReLU and
/// requantization. In split mode unit `i` covers output columns
/// `[i*P/k, (i+1)*P/k)`.
pub fn run_conv(
    x: &FeatureMap,
    weights: &BlockSparseWeights,
    layer: &LayerSpec,
    hw: &AcceleratorConfig,
) -> Result<LayerRun> {
    if layer.kind != LayerKind::Conv {
        return Err(Error::Precondition("run_conv needs a conv layer".into()));
    }
    hw.validate()?;
    layer.validate()?;
    if weights.filters() != layer.filters || weights.cols() != layer.shared_dim() {
        return Err(Error::DimensionMismatch(format!(
            "weights are {}x{}, layer needs {}x{}",
            weights.filters(),
            weights.cols(),
            layer.filters,
            layer.shared_dim()
        )));
    }
    let total = layer.patch_count();
    let placement = configure(&hw.array, layer.filters)?;
    let mut out = OutputMatrix::zeros(layer.filters, total);
    let mut overflow = 0;
    let mut merged: Option<UnitRun> = None;
    for i in 0..hw.array.split_factor {
        let range = placement.column_range(i, total);
        let unit = run_unit(x, layer, weights, hw, i, range.clone())?;
        overflow += unit.out.overflow_events();
        for f in 0..layer.filters {
            for p in range.clone() {
                out.set(f, p, unit.out.get(f, p));
            }
        }
        match merged.as_mut() {
            None => merged = Some(unit),
            Some(m) => {
                m.im2col.merge_parallel(&unit.im2col);
                m.gemm.merge_parallel(&unit.gemm, hw.array.cols);
                m.compressor.merge(&unit.compressor);
                m.cycles = m.cycles.max(unit.cycles);
            }
        }
    }
    let m = merged.expect("split factor >= 1");
    out.set_overflow_events(overflow);
    Ok(LayerRun {
        output: crate::model::reshape_output(&out, layer)?,
        accumulators: Some(out),
        mode: m.mode,
        cycles: m.cycles,
        im2col: m.im2col,
        gemm: m.gemm,
        compressor: m.compressor,
    })
}

pub fn run_pool(x: &FeatureMap, layer: &LayerSpec, hw: &AcceleratorConfig) -> Result<LayerRun> {
    hw.validate()?;
    let (output, im2col) = simulate_pool(x, layer, &hw.im2col)?;
    Ok(LayerRun {
        output,
        accumulators: None,
        mode: im2col.mode,
        cycles: im2col.cycles,
        im2col,
        gemm: GemmStats::default(),
        compressor: CompressorStats::default(),
    })
}

/// FC layer over a whole batch: sample `b` becomes column `b` of the input
/// matrix. Outputs are `F x 1 x 1` maps after bias, ReLU and requantization.
pub fn run_fc(
    xs: &[FeatureMap],
    weights: &BlockSparseWeights,
    layer: &LayerSpec,
    hw: &AcceleratorConfig,
) -> Result<(Vec<FeatureMap>, LayerRun)> {
    if layer.kind != LayerKind::FullyConnected {
        return Err(Error::Precondition("run_fc needs a fully connected layer".into()));
    }
    hw.validate()?;
    layer.validate()?;
    let input = fc_input(xs, layer)?;
    if weights.filters() != layer.filters || weights.cols() != input.rows() {
        return Err(Error::DimensionMismatch(format!(
            "weights are {}x{}, layer needs {}x{}",
            weights.filters(),
            weights.cols(),
            layer.filters,
            input.rows()
        )));
    }
    let mut comp = CompressorStats::default();
    for start in (0..input.cols()).step_by(hw.array.cols) {
        let end = (start + hw.array.cols).min(input.cols());
        comp.add(&compress_tile(&input.slice_columns(start, end), hw.block_size)?);
    }
    let (acc, gemm) = simulate_fc(weights, &input, hw.block_size, &hw.array)?;
    let outputs = fc_outputs(&acc, layer);
    let run = LayerRun {
        output: outputs[0].clone(),
        accumulators: Some(acc),
        mode: Im2ColMode::Bypass,
        cycles: gemm.cycles,
        // the input controller streams the batch straight through
        im2col: Im2ColStats {
            mode: Im2ColMode::Bypass,
            patches: input.cols(),
            sram_reads: input.rows() * input.cols(),
            elements_emitted: input.rows() * input.cols(),
            ..Im2ColStats::default()
        },
        gemm,
        compressor: comp,
    };
    Ok((outputs, run))
}

/// Flattened batch, one sample per column.
pub fn fc_input(xs: &[FeatureMap], layer: &LayerSpec) -> Result<Im2ColMatrix> {
    if xs.is_empty() {
        return Err(Error::Precondition("fully connected batch must be >= 1".into()));
    }
    let features = layer.shared_dim();
    let mut data = Vec::with_capacity(features * xs.len());
    for x in xs {
        if x.dims() != layer.input_dims() {
            return Err(Error::DimensionMismatch(format!(
                "input is {:?}, layer expects {:?}",
                x.dims(),
                layer.input_dims()
            )));
        }
        data.extend_from_slice(x.data());
    }
    Im2ColMatrix::from_columns(features, xs.len(), data)
}

/// Requantized FC outputs, one map per batch column.
pub fn fc_outputs(acc: &OutputMatrix, layer: &LayerSpec) -> Vec<FeatureMap> {
    (0..acc.cols())
        .map(|b| {
            FeatureMap::from_fn(acc.rows(), 1, 1, |f, _, _| {
                let bias = layer.bias.as_ref().map(|v| v[f]);
                crate::model::quant::finish_value(acc.get(f, b), bias, layer.relu, layer.shift)
            })
        })
        .collect()
}
