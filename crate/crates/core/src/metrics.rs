//! Event accounting and the abstract energy model.
//!
//! Costs are abstract units per event. Only ratios between configurations
//! are meaningful.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gemm::GemmStats;
use crate::im2col::{simulate_im2col, Im2ColConfig, Im2ColStats};
use crate::model::{FeatureMap, LayerKind, LayerSpec};
use crate::pipeline::LayerRun;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyCostTable {
    pub dram_read: f64,
    pub sram_read: f64,
    pub sram_write: f64,
    /// PU buffer access or ring hop.
    pub buffer_access: f64,
    pub mac_op: f64,
    /// Bitmap check or index arithmetic.
    pub metadata_op: f64,
}

impl Default for EnergyCostTable {
    fn default() -> Self {
        EnergyCostTable {
            dram_read: 200.0,
            sram_read: 6.0,
            sram_write: 6.0,
            buffer_access: 1.0,
            mac_op: 1.0,
            metadata_op: 1.0,
        }
    }
}

impl EnergyCostTable {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.dram_read,
            self.sram_read,
            self.sram_write,
            self.buffer_access,
            self.mac_op,
            self.metadata_op,
        ];
        if all.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidConfig("energy costs must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Self {
        EnergyCostTable {
            dram_read: self.dram_read * k,
            sram_read: self.sram_read * k,
            sram_write: self.sram_write * k,
            buffer_access: self.buffer_access * k,
            mac_op: self.mac_op * k,
            metadata_op: self.metadata_op * k,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EventCounts {
    pub dram_reads: u64,
    pub sram_reads: u64,
    pub sram_writes: u64,
    pub buffer_accesses: u64,
    pub mac_ops: u64,
    /// Gated multiplications: no MAC energy, one metadata op each.
    pub gated_macs: u64,
    pub metadata_ops: u64,
}

impl EventCounts {
    /// Im2Col-unit events only.
    pub fn from_im2col(s: &Im2ColStats) -> Self {
        EventCounts {
            sram_reads: s.sram_reads as u64,
            buffer_accesses: s.buffer_accesses as u64,
            metadata_ops: s.metadata_ops as u64,
            ..EventCounts::default()
        }
    }

    pub fn from_gemm(s: &GemmStats) -> Self {
        EventCounts {
            sram_reads: s.weight_reads as u64,
            sram_writes: s.output_writes as u64,
            mac_ops: s.mac_ops as u64,
            gated_macs: s.gated_macs as u64,
            metadata_ops: s.metadata_ops as u64,
            ..EventCounts::default()
        }
    }

    pub fn add(&self, o: &EventCounts) -> Self {
        EventCounts {
            dram_reads: self.dram_reads + o.dram_reads,
            sram_reads: self.sram_reads + o.sram_reads,
            sram_writes: self.sram_writes + o.sram_writes,
            buffer_accesses: self.buffer_accesses + o.buffer_accesses,
            mac_ops: self.mac_ops + o.mac_ops,
            gated_macs: self.gated_macs + o.gated_macs,
            metadata_ops: self.metadata_ops + o.metadata_ops,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub dram: f64,
    pub sram: f64,
    pub buffer: f64,
    pub mac: f64,
    pub metadata: f64,
    pub total: f64,
}

pub fn tally(c: &EventCounts, t: &EnergyCostTable) -> EnergyBreakdown {
    let dram = c.dram_reads as f64 * t.dram_read;
    let sram = c.sram_reads as f64 * t.sram_read + c.sram_writes as f64 * t.sram_write;
    let buffer = c.buffer_accesses as f64 * t.buffer_access;
    let mac = c.mac_ops as f64 * t.mac_op;
    let metadata = (c.metadata_ops + c.gated_macs) as f64 * t.metadata_op;
    EnergyBreakdown {
        dram,
        sram,
        buffer,
        mac,
        metadata,
        total: dram + sram + buffer + mac + metadata,
    }
}

/// Im2Col energy with reuse against the same unit with ring forwarding and
/// the reserved buffer switched off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReuseComparison {
    pub reuse: EventCounts,
    pub naive: EventCounts,
    pub reuse_energy: f64,
    pub naive_energy: f64,
    /// `1 - reuse_energy / naive_energy`.
    pub reduction: f64,
}

/// Im2Col event counts do not depend on the input values, so both runs use
/// an all-zero map.
pub fn reuse_comparison(layer: &LayerSpec, cfg: &Im2ColConfig, table: &EnergyCostTable) -> Result<ReuseComparison> {
    if layer.kind != LayerKind::Conv {
        return Err(Error::Precondition("reuse comparison needs a conv layer".into()));
    }
    let x = FeatureMap::zeros(layer.channels, layer.in_h, layer.in_w);
    let tile = cfg.pu_count.max(1);
    let (_, on) = simulate_im2col(&x, layer, cfg, tile)?;
    let (_, off) = simulate_im2col(&x, layer, &cfg.without_reuse(), tile)?;
    let reuse = EventCounts::from_im2col(&on);
    let naive = EventCounts::from_im2col(&off);
    let reuse_energy = tally(&reuse, table).total;
    let naive_energy = tally(&naive, table).total;
    let reduction = if naive_energy == 0.0 {
        0.0
    } else {
        1.0 - reuse_energy / naive_energy
    };
    Ok(ReuseComparison {
        reuse,
        naive,
        reuse_energy,
        naive_energy,
        reduction,
    })
}

pub fn compare_reuse_energy(layer: &LayerSpec, cfg: &Im2ColConfig, table: &EnergyCostTable) -> Result<f64> {
    reuse_comparison(layer, cfg, table).map(|r| r.reduction)
}

/// Everything measured for one layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub layer: usize,
    pub name: String,
    pub kind: LayerKind,
    pub run: RunSummary,
    pub im2col: Im2ColStats,
    pub gemm: GemmStats,
    pub events: EventCounts,
    pub energy: EnergyBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSummary {
    pub mode: crate::im2col::Im2ColMode,
    pub split_factor: usize,
    pub cycles: u64,
    pub zero_feature_blocks: usize,
}

impl SimReport {
    /// `dram_reads` is the number of weight values loaded for the layer.
    pub fn new(
        layer: usize,
        name: &str,
        kind: LayerKind,
        split_factor: usize,
        run: &LayerRun,
        dram_reads: u64,
        table: &EnergyCostTable,
    ) -> Self {
        let mut events = EventCounts::from_im2col(&run.im2col).add(&EventCounts::from_gemm(&run.gemm));
        events.dram_reads = dram_reads;
        if kind.is_pool() {
            events.sram_writes += run.output.data().len() as u64;
        }
        SimReport {
            layer,
            name: name.to_string(),
            kind,
            run: RunSummary {
                mode: run.mode,
                split_factor,
                cycles: run.cycles,
                zero_feature_blocks: run.compressor.zero_blocks,
            },
            im2col: run.im2col.clone(),
            gemm: run.gemm.clone(),
            energy: tally(&events, table),
            events,
        }
    }

    /// Adds a later run of the same layer (next batch sample).
    pub fn absorb(&mut self, run: &LayerRun, table: &EnergyCostTable, array_cols: usize) {
        let mut events = EventCounts::from_im2col(&run.im2col).add(&EventCounts::from_gemm(&run.gemm));
        if self.kind.is_pool() {
            events.sram_writes += run.output.data().len() as u64;
        }
        self.events = self.events.add(&events);
        self.energy = tally(&self.events, table);
        self.im2col.merge_sequential(&run.im2col);
        self.gemm.merge_sequential(&run.gemm, array_cols);
        self.run.cycles += run.cycles;
        self.run.zero_feature_blocks += run.compressor.zero_blocks;
    }

    pub fn row(&self) -> ReportRow {
        ReportRow {
            layer: self.layer,
            name: self.name.clone(),
            kind: self.kind.as_str().to_string(),
            mode: self.run.mode.as_str().to_string(),
            split_factor: self.run.split_factor,
            cycles: self.run.cycles,
            im2col_cycles: self.im2col.cycles,
            gemm_cycles: self.gemm.cycles,
            patches: self.im2col.patches,
            im2col_sram_reads: self.im2col.sram_reads,
            neighbor_forwards: self.im2col.neighbor_forwards,
            reserved_hits: self.im2col.reserved_hits,
            padding_zeros: self.im2col.padding_zeros,
            buffer_accesses: self.im2col.buffer_accesses,
            streamed_positions: self.gemm.streamed_positions,
            skipped_by_m1: self.gemm.skipped_by_m1,
            skipped_by_feature_bitmap: self.gemm.skipped_by_feature_bitmap,
            zero_feature_blocks: self.run.zero_feature_blocks,
            mac_ops: self.gemm.mac_ops,
            gated_macs: self.gemm.gated_macs,
            weight_reads: self.gemm.weight_reads,
            output_writes: self.gemm.output_writes,
            overflow_events: self.gemm.overflow_events,
            row_occupancy: self.gemm.row_occupancy,
            col_occupancy: self.gemm.col_occupancy,
            mac_active_fraction: self.gemm.mac_active_fraction,
            energy_dram: self.energy.dram,
            energy_sram: self.energy.sram,
            energy_buffer: self.energy.buffer,
            energy_mac: self.energy.mac,
            energy_metadata: self.energy.metadata,
            energy_total: self.energy.total,
        }
    }
}

/// Flat per-layer record. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub layer: usize,
    pub name: String,
    pub kind: String,
    pub mode: String,
    pub split_factor: usize,
    pub cycles: u64,
    pub im2col_cycles: u64,
    pub gemm_cycles: u64,
    pub patches: usize,
    pub im2col_sram_reads: usize,
    pub neighbor_forwards: usize,
    pub reserved_hits: usize,
    pub padding_zeros: usize,
    pub buffer_accesses: usize,
    pub streamed_positions: usize,
    pub skipped_by_m1: usize,
    pub skipped_by_feature_bitmap: usize,
    pub zero_feature_blocks: usize,
    pub mac_ops: usize,
    pub gated_macs: usize,
    pub weight_reads: usize,
    pub output_writes: usize,
    pub overflow_events: usize,
    pub row_occupancy: f64,
    pub col_occupancy: f64,
    pub mac_active_fraction: f64,
    pub energy_dram: f64,
    pub energy_sram: f64,
    pub energy_buffer: f64,
    pub energy_mac: f64,
    pub energy_metadata: f64,
    pub energy_total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidConfig(format!("unknown report format {other:?}"))),
        }
    }
}

/// Writes rows of any serializable record type; CSV and JSON share field
/// names.
pub fn write_rows<T: Serialize>(rows: &[T], format: ReportFormat, mut out: impl Write) -> Result<()> {
    let fmt_err = |e: String| Error::Format(e);
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in rows {
                w.serialize(r).map_err(|e| fmt_err(e.to_string()))?;
            }
            w.flush().map_err(|e| fmt_err(e.to_string()))?;
        }
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, rows).map_err(|e| fmt_err(e.to_string()))?;
            out.write_all(b"\n").map_err(|e| fmt_err(e.to_string()))?;
        }
    }
    Ok(())
}

pub fn render_rows<T: Serialize>(rows: &[T], format: ReportFormat) -> Result<String> {
    let mut buf = Vec::new();
    write_rows(rows, format, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::im2col::UNBOUNDED;

    #[test]
    fn worked_dot_product() {
        let c = EventCounts {
            dram_reads: 10,
            sram_reads: 20,
            mac_ops: 50,
            ..EventCounts::default()
        };
        assert_eq!(tally(&c, &EnergyCostTable::default()).total, 2170.0);
    }

    #[test]
    fn zero_counters_zero_energy() {
        assert_eq!(tally(&EventCounts::default(), &EnergyCostTable::default()).total, 0.0);
    }

    #[test]
    fn gated_macs_billed_as_metadata() {
        let c = EventCounts {
            gated_macs: 7,
            ..EventCounts::default()
        };
        let e = tally(&c, &EnergyCostTable::default());
        assert_eq!(e.mac, 0.0);
        assert_eq!(e.metadata, 7.0);
    }

    #[test]
    fn linear_in_costs() {
        let c = EventCounts {
            dram_reads: 3,
            sram_reads: 5,
            sram_writes: 2,
            buffer_accesses: 11,
            mac_ops: 13,
            gated_macs: 4,
            metadata_ops: 9,
        };
        let t = EnergyCostTable::default();
        assert_eq!(tally(&c, &t.scaled(2.0)).total, 2.0 * tally(&c, &t).total);
    }

    #[test]
    fn negative_cost_rejected() {
        let t = EnergyCostTable {
            mac_op: -1.0,
            ..EnergyCostTable::default()
        };
        assert!(t.validate().is_err());
    }

    #[test]
    fn no_overlap_no_reduction() {
        let layer = LayerSpec::conv(2, 8, 8, 4, 2, 2, 2, 0);
        let r = compare_reuse_energy(&layer, &Im2ColConfig::default(), &EnergyCostTable::default()).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn overlap_reduction_matches_counters() {
        let layer = LayerSpec::conv(4, 16, 16, 8, 3, 3, 1, 0);
        let cfg = Im2ColConfig::default().with_reserved_cap(UNBOUNDED);
        let t = EnergyCostTable::default();
        let r = reuse_comparison(&layer, &cfg, &t).unwrap();
        let by_hand = |c: &EventCounts| c.sram_reads as f64 * 6.0 + c.buffer_accesses as f64 + c.metadata_ops as f64;
        assert!(r.reduction > 0.0);
        assert_eq!(r.reduction, 1.0 - by_hand(&r.reuse) / by_hand(&r.naive));
        // read-once: SRAM energy is exactly H*W*C*sram
        assert_eq!(r.reuse.sram_reads, 16 * 16 * 4);
    }

    #[test]
    fn buffer_as_costly_as_sram_erases_savings() {
        let layer = LayerSpec::conv(4, 16, 16, 8, 3, 3, 1, 0);
        let cfg = Im2ColConfig::default().with_reserved_cap(UNBOUNDED);
        let t = EnergyCostTable {
            buffer_access: 6.0,
            metadata_op: 0.0,
            ..EnergyCostTable::default()
        };
        let r = compare_reuse_energy(&layer, &cfg, &t).unwrap();
        let default = compare_reuse_energy(&layer, &cfg, &EnergyCostTable::default()).unwrap();
        assert!(r < default);
        assert!(r.abs() < 0.05, "{r}");
    }

    #[test]
    fn csv_and_json_share_field_names() {
        #[derive(Serialize)]
        struct R {
            a: u32,
            b: f64,
        }
        let rows = [R { a: 1, b: 0.5 }];
        let csv = render_rows(&rows, ReportFormat::Csv).unwrap();
        let json = render_rows(&rows, ReportFormat::Json).unwrap();
        assert_eq!(csv, "a,b\n1,0.5\n");
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v[0]["a"], 1);
        assert_eq!(v[0]["b"], 0.5);
    }
}
