//! Patch scheduling and element-source planning.
//!
//! A round is one patch row. Patch column `px` always runs on PU
//! `px % pu_count`, so a PU sees the same patch column again one round later
//! and can keep the vertical overlap in its reserved buffer. Inside a round
//! the PUs work in waves of `pu_count` consecutive patches; horizontally
//! adjacent patches sit on ring-adjacent PUs, so the left patch's overlap
//! arrives over the ring.

use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::im2col::config::Im2ColConfig;
use crate::model::{LayerKind, LayerSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    New,
    Neighbor,
    Reserved,
    Pad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchId {
    pub py: usize,
    pub px: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleSlot {
    pub patch: PatchId,
    pub pu: usize,
    pub round: usize,
    pub wave: usize,
}

#[derive(Debug, Clone)]
pub struct PatchSchedule {
    out_w: usize,
    pu_count: usize,
    range: Range<usize>,
}

impl PatchSchedule {
    pub fn new(layer: &LayerSpec, pu_count: usize) -> Self {
        PatchSchedule::for_range(layer, pu_count, 0..layer.patch_count())
    }

    pub fn for_range(layer: &LayerSpec, pu_count: usize, range: Range<usize>) -> Self {
        PatchSchedule {
            out_w: layer.out_w(),
            pu_count: pu_count.max(1),
            range,
        }
    }

    pub fn slot(&self, p: usize) -> ScheduleSlot {
        let (py, px) = (p / self.out_w, p % self.out_w);
        ScheduleSlot {
            patch: PatchId { py, px },
            pu: px % self.pu_count,
            round: py,
            wave: px / self.pu_count,
        }
    }

    /// Slots in execution order (row-major patch order).
    pub fn iter(&self) -> impl Iterator<Item = ScheduleSlot> + '_ {
        self.range.clone().map(|p| self.slot(p))
    }
}

/// Window geometry in padded coordinates.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Geometry {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_w: usize,
}

impl Geometry {
    pub fn of(layer: &LayerSpec) -> Self {
        Geometry {
            channels: layer.channels,
            in_h: layer.in_h,
            in_w: layer.in_w,
            kh: layer.kernel_h,
            kw: layer.kernel_w,
            stride: layer.stride,
            pad: layer.padding,
            out_w: layer.out_w(),
        }
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    /// Padded coordinates of `[lo, lo+len)` that fall on real input along an
    /// axis of the given extent.
    fn real_span(&self, lo: usize, len: usize, extent: usize) -> usize {
        let start = lo.max(self.pad);
        let end = (lo + len).min(self.pad + extent);
        end.saturating_sub(start)
    }

    /// Real elements in a padded rectangle, across all channels.
    pub fn real_elements(&self, y0: usize, rows: usize, x0: usize, cols: usize) -> usize {
        self.channels * self.real_span(y0, rows, self.in_h) * self.real_span(x0, cols, self.in_w)
    }

    #[inline]
    pub fn is_real(&self, y: usize, x: usize) -> bool {
        y >= self.pad && y < self.pad + self.in_h && x >= self.pad && x < self.pad + self.in_w
    }

    /// Leading kernel columns shared with the left neighbour patch.
    pub fn horizontal_overlap(&self) -> usize {
        self.kw.saturating_sub(self.stride)
    }

    /// Leading kernel rows shared with the patch one round earlier.
    pub fn vertical_overlap(&self) -> usize {
        self.kh.saturating_sub(self.stride)
    }
}

/// Per-patch forwarding and reservation decisions for one Im2Col unit
/// working through a contiguous range of patches.
#[derive(Debug, Clone)]
pub(crate) struct Planner {
    pub geom: Geometry,
    pub range: Range<usize>,
    pub pu_count: usize,
    /// Patch receives its horizontal overlap over the ring.
    neighbor_ok: Vec<bool>,
    /// Patch's vertical overlap with the next round is kept in the reserved
    /// buffer.
    reserve_ok: Vec<bool>,
    demand: Vec<usize>,
}

impl Planner {
    pub fn new(layer: &LayerSpec, cfg: &Im2ColConfig, range: Range<usize>) -> Self {
        let geom = Geometry::of(layer);
        let n = range.len();
        let local = |p: usize| p - range.start;
        let in_range = |p: usize| range.contains(&p);

        let hov = geom.horizontal_overlap();
        let mut neighbor_ok = vec![false; n];
        for p in range.clone() {
            let (py, px) = (p / geom.out_w, p % geom.out_w);
            if cfg.ring_forwarding && hov > 0 && px > 0 && in_range(p - 1) {
                let count = geom.real_elements(py * geom.stride, geom.kh, px * geom.stride, hov);
                neighbor_ok[local(p)] = count <= cfg.neighbor_buf_cap;
            }
        }

        let vov = geom.vertical_overlap();
        let mut demand = vec![0; n];
        for p in range.clone() {
            let q = p + geom.out_w;
            if vov == 0 || !in_range(q) {
                continue;
            }
            let (qy, qx) = (q / geom.out_w, q % geom.out_w);
            let skip = if neighbor_ok[local(q)] { hov } else { 0 };
            demand[local(p)] = geom.real_elements(qy * geom.stride, vov, qx * geom.stride + skip, geom.kw - skip);
        }

        // Within each (round, PU), accept reservations in patch order while
        // the cumulative footprint fits; the first miss ends the round.
        let pu_count = cfg.pu_count.max(1);
        let mut reserve_ok = vec![false; n];
        let mut used = vec![0usize; pu_count];
        let mut failed = vec![false; pu_count];
        let mut row = usize::MAX;
        for p in range.clone() {
            let (py, px) = (p / geom.out_w, p % geom.out_w);
            if py != row {
                row = py;
                used.iter_mut().for_each(|u| *u = 0);
                failed.iter_mut().for_each(|f| *f = false);
            }
            let pu = px % pu_count;
            let d = demand[local(p)];
            if d == 0 || failed[pu] {
                continue;
            }
            if used[pu] + d <= cfg.reserved_buf_cap {
                used[pu] += d;
                reserve_ok[local(p)] = true;
            } else {
                failed[pu] = true;
            }
        }

        Planner {
            geom,
            range,
            pu_count,
            neighbor_ok,
            reserve_ok,
            demand,
        }
    }

    pub fn neighbor_ok(&self, p: usize) -> bool {
        self.neighbor_ok[p - self.range.start]
    }

    pub fn reserve_ok(&self, p: usize) -> bool {
        self.reserve_ok[p - self.range.start]
    }

    pub fn demand(&self, p: usize) -> usize {
        self.demand[p - self.range.start]
    }

    /// Source of kernel element `(r, s)` (any channel) of patch `p`.
    #[inline]
    pub fn source(&self, p: usize, r: usize, s: usize) -> Source {
        let g = &self.geom;
        let (py, px) = (p / g.out_w, p % g.out_w);
        if !g.is_real(py * g.stride + r, px * g.stride + s) {
            return Source::Pad;
        }
        if self.neighbor_ok(p) && s + g.stride < g.kw {
            return Source::Neighbor;
        }
        if r + g.stride < g.kh && p >= self.range.start + g.out_w && self.reserve_ok(p - g.out_w) {
            return Source::Reserved;
        }
        Source::New
    }
}

/// Source of every element of one patch, in canonical shared-dimension
/// order, for a unit that processes the whole layer.
pub fn classify_sources(patch: PatchId, layer: &LayerSpec, cfg: &Im2ColConfig) -> Result<Vec<Source>> {
    if layer.kind == LayerKind::FullyConnected {
        return Err(Error::Precondition("fully connected layers have no patches".into()));
    }
    layer.validate()?;
    cfg.validate()?;
    if patch.py >= layer.out_h() || patch.px >= layer.out_w() {
        return Err(Error::Precondition(format!(
            "patch ({}, {}) outside the {}x{} patch grid",
            patch.py,
            patch.px,
            layer.out_h(),
            layer.out_w()
        )));
    }
    let planner = Planner::new(layer, cfg, 0..layer.patch_count());
    let p = patch.py * layer.out_w() + patch.px;
    let mut out = Vec::with_capacity(layer.shared_dim());
    for _c in 0..layer.channels {
        for r in 0..layer.kernel_h {
            for s in 0..layer.kernel_w {
                out.push(planner.source(p, r, s));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(v: &[Source], s: Source) -> usize {
        v.iter().filter(|&&x| x == s).count()
    }

    #[test]
    fn same_column_same_pu() {
        let layer = LayerSpec::conv(1, 8, 10, 1, 3, 3, 1, 0);
        let sched = PatchSchedule::new(&layer, 3);
        let slots: Vec<_> = sched.iter().collect();
        assert_eq!(slots.len(), layer.patch_count());
        for s in &slots {
            assert_eq!(s.pu, s.patch.px % 3);
            assert_eq!(s.round, s.patch.py);
        }
        let mut seen: Vec<_> = slots.iter().map(|s| (s.patch.py, s.patch.px)).collect();
        seen.dedup();
        assert_eq!(seen.len(), layer.patch_count());
    }

    #[test]
    fn first_patch_fetches_everything() {
        let layer = LayerSpec::conv(2, 6, 6, 1, 3, 3, 1, 0);
        let src = classify_sources(PatchId { py: 0, px: 0 }, &layer, &Im2ColConfig::default()).unwrap();
        assert_eq!(count(&src, Source::New), 18);
    }

    #[test]
    fn neighbor_count_is_k2_minus_ks() {
        let layer = LayerSpec::conv(1, 7, 7, 1, 3, 3, 1, 0);
        let src = classify_sources(PatchId { py: 0, px: 2 }, &layer, &Im2ColConfig::default()).unwrap();
        assert_eq!(count(&src, Source::Neighbor), 9 - 3);
        assert_eq!(count(&src, Source::New), 3);
    }

    #[test]
    fn interior_patch_mix() {
        let layer = LayerSpec::conv(1, 7, 7, 1, 3, 3, 1, 0);
        let cfg = Im2ColConfig::default().with_reserved_cap(UNBOUNDED_CAP);
        let src = classify_sources(PatchId { py: 2, px: 2 }, &layer, &cfg).unwrap();
        assert_eq!(count(&src, Source::Neighbor), 6);
        assert_eq!(count(&src, Source::Reserved), 2);
        assert_eq!(count(&src, Source::New), 1);
        let src = classify_sources(PatchId { py: 2, px: 0 }, &layer, &cfg).unwrap();
        assert_eq!(count(&src, Source::Reserved), 6);
        assert_eq!(count(&src, Source::New), 3);
    }

    const UNBOUNDED_CAP: usize = crate::im2col::config::UNBOUNDED;

    #[test]
    fn disjoint_stride_has_no_reuse() {
        let layer = LayerSpec::conv(3, 8, 8, 1, 2, 2, 2, 0);
        let cfg = Im2ColConfig::default().with_reserved_cap(UNBOUNDED_CAP);
        for py in 0..4 {
            for px in 0..4 {
                let src = classify_sources(PatchId { py, px }, &layer, &cfg).unwrap();
                assert_eq!(count(&src, Source::New), 12);
            }
        }
    }

    #[test]
    fn padding_takes_priority() {
        let layer = LayerSpec::conv(1, 4, 4, 1, 3, 3, 1, 1);
        let src = classify_sources(PatchId { py: 0, px: 1 }, &layer, &Im2ColConfig::default()).unwrap();
        assert_eq!(count(&src, Source::Pad), 3);
        assert_eq!(count(&src, Source::Neighbor), 4);
        assert_eq!(count(&src, Source::New), 2);
    }

    #[test]
    fn zero_reserve_disables_vertical_reuse() {
        let layer = LayerSpec::conv(1, 7, 7, 1, 3, 3, 1, 0);
        let cfg = Im2ColConfig::default().with_reserved_cap(0);
        let src = classify_sources(PatchId { py: 3, px: 0 }, &layer, &cfg).unwrap();
        assert_eq!(count(&src, Source::Reserved), 0);
        assert_eq!(count(&src, Source::New), 9);
    }

    #[test]
    fn reservation_prefix_stops_at_first_miss() {
        // 1 PU, W=7, K=3, T=1: px=0 needs 6 elements, px>0 needs 2 each.
        let layer = LayerSpec::conv(1, 7, 7, 1, 3, 3, 1, 0);
        let cfg = Im2ColConfig::default().with_pu_count(1).with_reserved_cap(9);
        let planner = Planner::new(&layer, &cfg, 0..layer.patch_count());
        assert_eq!(planner.demand(0), 6);
        assert_eq!(planner.demand(1), 2);
        assert!(planner.reserve_ok(0) && planner.reserve_ok(1));
        assert!(!planner.reserve_ok(2) && !planner.reserve_ok(3));
        // last round has nothing to reserve for
        assert_eq!(planner.demand(4 * 5), 0);
    }

    #[test]
    fn rejects_out_of_grid_patch() {
        let layer = LayerSpec::conv(1, 4, 4, 1, 3, 3, 1, 0);
        assert!(classify_sources(PatchId { py: 2, px: 0 }, &layer, &Im2ColConfig::default()).is_err());
    }
}
