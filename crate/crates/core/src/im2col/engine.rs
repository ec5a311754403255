use std::collections::HashMap;
use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::im2col::config::Im2ColConfig;
use crate::im2col::schedule::{Planner, Source};
use crate::im2col::timing::{bypass_cycles, step_cycles, StepLoad};
use crate::model::{pool_window, shared_index, FeatureMap, Im2ColMatrix, LayerKind, LayerSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Im2ColMode {
    #[default]
    PatchUnits,
    /// Input controller straight to output controller.
    Bypass,
}

impl Im2ColMode {
    /// Bypass when the config allows it and patches cannot overlap.
    pub fn select(layer: &LayerSpec, cfg: &Im2ColConfig) -> Self {
        if cfg.auto_bypass && layer.is_disjoint() {
            Im2ColMode::Bypass
        } else {
            Im2ColMode::PatchUnits
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Im2ColMode::PatchUnits => "patch_units",
            Im2ColMode::Bypass => "bypass",
        }
    }
}

/// Event counters of one Im2Col run.
///
/// Per patch, `sram_reads + neighbor_forwards + reserved_hits +
/// padding_zeros` equals the patch length R*S_k*C.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Im2ColStats {
    pub mode: Im2ColMode,
    pub patches: usize,
    pub sram_reads: usize,
    pub neighbor_forwards: usize,
    pub reserved_hits: usize,
    pub padding_zeros: usize,
    pub elements_emitted: usize,
    /// PU buffer traffic: every non-padding element read out of a PU buffer,
    /// plus one write per ring forward and per element retained in the
    /// reserved buffer.
    pub buffer_accesses: usize,
    /// Coordinate bookkeeping, one per emitted element.
    pub metadata_ops: usize,
    pub cycles: u64,
    pub peak_reserved: usize,
    pub new_buffer_overflows: usize,
    #[serde(skip)]
    pub steps: Vec<StepLoad>,
}

impl Im2ColStats {
    /// Sums counters of units that ran side by side. Cycles take the max.
    pub fn merge_parallel(&mut self, other: &Im2ColStats) {
        self.patches += other.patches;
        self.sram_reads += other.sram_reads;
        self.neighbor_forwards += other.neighbor_forwards;
        self.reserved_hits += other.reserved_hits;
        self.padding_zeros += other.padding_zeros;
        self.elements_emitted += other.elements_emitted;
        self.buffer_accesses += other.buffer_accesses;
        self.metadata_ops += other.metadata_ops;
        self.cycles = self.cycles.max(other.cycles);
        self.peak_reserved = self.peak_reserved.max(other.peak_reserved);
        self.new_buffer_overflows += other.new_buffer_overflows;
        self.steps.extend_from_slice(&other.steps);
    }

    /// Sums counters of runs that happened one after another.
    pub fn merge_sequential(&mut self, other: &Im2ColStats) {
        let cycles = self.cycles + other.cycles;
        self.merge_parallel(other);
        self.cycles = cycles;
    }
}

/// A group of consecutive Im2Col columns handed to the GEMM unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tile {
    /// Patch index of the first column.
    pub start: usize,
    pub columns: Im2ColMatrix,
    /// Im2Col cycles attributed to this tile: the waves that finished while
    /// it was being assembled.
    pub cycles: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct StepKey {
    round: usize,
    wave: usize,
}

/// Streams the Im2Col matrix of one layer, tile by tile, while accounting
/// for where every element came from.
pub struct Im2ColEngine<'a> {
    x: &'a FeatureMap,
    planner: Planner,
    cfg: Im2ColConfig,
    mode: Im2ColMode,
    tile_width: usize,
    next: usize,
    prev_col: Vec<i16>,
    /// Per PU, reserved values keyed by (patch column, input index).
    reserved: Vec<HashMap<(usize, usize), i16>>,
    stats: Im2ColStats,
    step: Option<(StepKey, StepLoad)>,
    pending_cycles: u64,
    bypass_cycles_so_far: u64,
    sources: Vec<Source>,
}

impl<'a> Im2ColEngine<'a> {
    pub fn new(
        x: &'a FeatureMap,
        layer: &LayerSpec,
        cfg: &Im2ColConfig,
        mode: Im2ColMode,
        range: Range<usize>,
        tile_width: usize,
    ) -> Result<Self> {
        if layer.kind == LayerKind::FullyConnected {
            return Err(Error::Precondition("fully connected layers have no patches".into()));
        }
        layer.validate()?;
        cfg.validate()?;
        if x.dims() != layer.input_dims() {
            return Err(Error::DimensionMismatch(format!(
                "input is {:?}, layer expects {:?}",
                x.dims(),
                layer.input_dims()
            )));
        }
        if range.end > layer.patch_count() || range.start > range.end {
            return Err(Error::Precondition(format!(
                "patch range {range:?} outside 0..{}",
                layer.patch_count()
            )));
        }
        if tile_width == 0 {
            return Err(Error::InvalidConfig("tile width must be >= 1".into()));
        }
        if mode == Im2ColMode::Bypass && !layer.is_disjoint() {
            return Err(Error::Precondition(format!(
                "bypass needs stride >= kernel, got stride {} for a {}x{} kernel",
                layer.stride, layer.kernel_h, layer.kernel_w
            )));
        }
        let next = range.start;
        let planner = Planner::new(layer, cfg, range);
        Ok(Im2ColEngine {
            x,
            cfg: cfg.clone(),
            mode,
            tile_width,
            next,
            prev_col: Vec::new(),
            reserved: vec![HashMap::new(); planner.pu_count],
            stats: Im2ColStats {
                mode,
                ..Im2ColStats::default()
            },
            step: None,
            pending_cycles: 0,
            bypass_cycles_so_far: 0,
            sources: Vec::with_capacity(layer.kernel_area()),
            planner,
        })
    }

    pub fn stats(&self) -> &Im2ColStats {
        &self.stats
    }

    /// Drains any remaining tiles and returns the final counters.
    pub fn finish(mut self) -> Im2ColStats {
        while self.next().is_some() {}
        self.stats
    }

    fn step_key(&self, p: usize) -> StepKey {
        let out_w = self.planner.geom.out_w;
        StepKey {
            round: p / out_w,
            wave: (p % out_w) / self.planner.pu_count,
        }
    }

    fn close_step(&mut self) {
        if let Some((_, load)) = self.step.take() {
            let cycles = step_cycles(&load, &self.cfg);
            self.pending_cycles += cycles;
            self.stats.cycles += cycles;
            self.stats.steps.push(load);
        }
    }

    fn assemble(&mut self, p: usize, out: &mut Vec<i16>) {
        let g = self.planner.geom;
        let (py, px) = (p / g.out_w, p % g.out_w);
        let (y0, x0) = (py * g.stride, px * g.stride);
        let len = g.patch_len();
        let base = out.len();
        out.resize(base + len, 0);
        let col = &mut out[base..];

        self.sources.clear();
        for r in 0..g.kh {
            for s in 0..g.kw {
                self.sources.push(match self.mode {
                    Im2ColMode::Bypass if g.is_real(y0 + r, x0 + s) => Source::New,
                    Im2ColMode::Bypass => Source::Pad,
                    Im2ColMode::PatchUnits => self.planner.source(p, r, s),
                });
            }
        }

        let pu = px % self.planner.pu_count;
        let (mut new, mut fwd, mut hits, mut pads) = (0, 0, 0, 0);
        for c in 0..g.channels {
            for r in 0..g.kh {
                for s in 0..g.kw {
                    let idx = shared_index(c, r, s, g.kh, g.kw);
                    let (y, xx) = (y0 + r, x0 + s);
                    col[idx] = match self.sources[r * g.kw + s] {
                        Source::Pad => {
                            pads += 1;
                            0
                        }
                        Source::Neighbor => {
                            fwd += 1;
                            self.prev_col[shared_index(c, r, s + g.stride, g.kh, g.kw)]
                        }
                        Source::Reserved => {
                            hits += 1;
                            let key = self.x.index(c, y - g.pad, xx - g.pad);
                            self.reserved[pu]
                                .remove(&(px, key))
                                .expect("reserved element missing from the PU's reserved buffer")
                        }
                        Source::New => {
                            new += 1;
                            self.x.get(c, y - g.pad, xx - g.pad)
                        }
                    };
                }
            }
        }

        let mut retained = 0;
        if self.mode == Im2ColMode::PatchUnits && self.planner.reserve_ok(p) {
            let q = p + g.out_w;
            let skip = if self.planner.neighbor_ok(q) {
                g.horizontal_overlap()
            } else {
                0
            };
            for rq in 0..g.vertical_overlap() {
                let r = rq + g.stride;
                for s in skip..g.kw {
                    if !g.is_real(y0 + r, x0 + s) {
                        continue;
                    }
                    for c in 0..g.channels {
                        let key = self.x.index(c, y0 + r - g.pad, x0 + s - g.pad);
                        self.reserved[pu].insert((px, key), col[shared_index(c, r, s, g.kh, g.kw)]);
                        retained += 1;
                    }
                }
            }
            debug_assert_eq!(retained, self.planner.demand(p));
            self.stats.peak_reserved = self.stats.peak_reserved.max(self.reserved[pu].len());
        }

        self.prev_col.clear();
        self.prev_col.extend_from_slice(col);

        let st = &mut self.stats;
        st.patches += 1;
        st.sram_reads += new;
        st.neighbor_forwards += fwd;
        st.reserved_hits += hits;
        st.padding_zeros += pads;
        st.elements_emitted += len;
        st.metadata_ops += len;
        if self.mode == Im2ColMode::PatchUnits {
            st.buffer_accesses += (len - pads) + fwd + retained;
        }
        if new > self.cfg.new_buf_cap {
            st.new_buffer_overflows += 1;
        }

        if self.mode == Im2ColMode::PatchUnits {
            let key = self.step_key(p);
            if self.step.as_ref().is_some_and(|(k, _)| *k != key) {
                self.close_step();
            }
            let load = &mut self.step.get_or_insert((key, StepLoad::default())).1;
            load.new_elements += new;
            load.max_pu_elements = load.max_pu_elements.max(len);
            load.max_forwarded = load.max_forwarded.max(fwd);
            load.last_patch = p;
        }
    }
}

impl Iterator for Im2ColEngine<'_> {
    type Item = Tile;

    fn next(&mut self) -> Option<Tile> {
        let end_of_range = self.planner.range.end;
        if self.next >= end_of_range {
            return None;
        }
        let start = self.next;
        let end = (start + self.tile_width).min(end_of_range);
        let len = self.planner.geom.patch_len();
        let mut data = Vec::with_capacity(len * (end - start));
        for p in start..end {
            self.assemble(p, &mut data);
        }
        self.next = end;

        let cycles = match self.mode {
            Im2ColMode::PatchUnits => {
                let wave_done =
                    end == end_of_range || self.step.as_ref().is_some_and(|(k, _)| *k != self.step_key(end));
                if wave_done {
                    self.close_step();
                }
                std::mem::take(&mut self.pending_cycles)
            }
            Im2ColMode::Bypass => {
                let total = bypass_cycles(self.stats.elements_emitted, &self.cfg);
                self.stats.cycles = total;
                total - std::mem::replace(&mut self.bypass_cycles_so_far, total)
            }
        };
        let columns =
            Im2ColMatrix::from_columns(len, end - start, data).expect("tile buffer sized from the patch geometry");
        Some(Tile { start, columns, cycles })
    }
}

pub fn simulate_im2col_range(
    x: &FeatureMap,
    layer: &LayerSpec,
    cfg: &Im2ColConfig,
    mode: Im2ColMode,
    range: Range<usize>,
    tile_width: usize,
) -> Result<(Vec<Tile>, Im2ColStats)> {
    let mut engine = Im2ColEngine::new(x, layer, cfg, mode, range, tile_width)?;
    let tiles: Vec<Tile> = engine.by_ref().collect();
    Ok((tiles, engine.finish()))
}

/// Runs the patch-unit path over the whole layer.
pub fn simulate_im2col(
    x: &FeatureMap,
    layer: &LayerSpec,
    cfg: &Im2ColConfig,
    tile_width: usize,
) -> Result<(Vec<Tile>, Im2ColStats)> {
    simulate_im2col_range(
        x,
        layer,
        cfg,
        Im2ColMode::PatchUnits,
        0..layer.patch_count(),
        tile_width,
    )
}

/// Runs the PU-free path; only legal when stride >= kernel.
pub fn simulate_bypass(
    x: &FeatureMap,
    layer: &LayerSpec,
    cfg: &Im2ColConfig,
    tile_width: usize,
) -> Result<(Vec<Tile>, Im2ColStats)> {
    simulate_im2col_range(x, layer, cfg, Im2ColMode::Bypass, 0..layer.patch_count(), tile_width)
}

/// Concatenates a tile stream back into one matrix.
pub fn assemble_tiles(tiles: &[Tile]) -> Result<Im2ColMatrix> {
    Im2ColMatrix::concat_columns(tiles.iter().map(|t| &t.columns))
}

/// Pooling on the patch-unit outputs: each assembled patch is reduced per
/// channel instead of being sent to the GEMM unit.
pub fn simulate_pool(x: &FeatureMap, layer: &LayerSpec, cfg: &Im2ColConfig) -> Result<(FeatureMap, Im2ColStats)> {
    if !layer.kind.is_pool() {
        return Err(Error::Precondition("simulate_pool needs a pooling layer".into()));
    }
    let mode = Im2ColMode::select(layer, cfg);
    let mut engine = Im2ColEngine::new(x, layer, cfg, mode, 0..layer.patch_count(), cfg.pu_count)?;
    let area = layer.kernel_area();
    let (out_h, out_w) = (layer.out_h(), layer.out_w());
    let mut out = FeatureMap::zeros(layer.channels, out_h, out_w);
    for tile in engine.by_ref() {
        for j in 0..tile.columns.cols() {
            let p = tile.start + j;
            let col = tile.columns.column(j);
            for c in 0..layer.channels {
                let window = col[c * area..(c + 1) * area].iter().copied();
                out.set(c, p / out_w, p % out_w, pool_window(layer.kind, window, area));
            }
        }
    }
    Ok((out, engine.finish()))
}
