//! Design-space sweeps over a small parameter grid.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{render_rows, ReportFormat, ReportRow};
use crate::model::FeatureMap;
use crate::runner::config::NetworkConfig;
use crate::runner::network::{run_network, RunOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Capacity(#[serde(with = "crate::im2col::capacity")] pub usize);

/// Values to try per parameter; an empty list keeps the config's value.
/// Points are the cartesian product in field order, last field fastest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub split_factor: Vec<usize>,
    pub reserved_buf_cap: Vec<Capacity>,
    pub block_size: Vec<usize>,
    pub group_size: Vec<usize>,
    pub sram_bandwidth: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SweepPoint {
    pub split_factor: usize,
    pub reserved_buf_cap: Capacity,
    pub block_size: usize,
    pub group_size: usize,
    pub sram_bandwidth: usize,
}

impl SweepPoint {
    pub fn apply(&self, cfg: &NetworkConfig) -> NetworkConfig {
        let mut c = cfg.clone();
        let hw = &mut c.hardware;
        hw.array.split_factor = self.split_factor;
        hw.im2col.reserved_buf_cap = self.reserved_buf_cap.0;
        hw.secondary_im2col.reserved_buf_cap = self.reserved_buf_cap.0;
        hw.block_size = self.block_size;
        hw.prune.group_size = self.group_size;
        hw.im2col.sram_bandwidth = self.sram_bandwidth;
        hw.secondary_im2col.sram_bandwidth = self.sram_bandwidth;
        c
    }
}

impl SweepGrid {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn points(&self, cfg: &NetworkConfig) -> Vec<SweepPoint> {
        let hw = &cfg.hardware;
        let or = |v: &[usize], d: usize| if v.is_empty() { vec![d] } else { v.to_vec() };
        let caps: Vec<usize> = if self.reserved_buf_cap.is_empty() {
            vec![hw.im2col.reserved_buf_cap]
        } else {
            self.reserved_buf_cap.iter().map(|c| c.0).collect()
        };
        let mut out = Vec::new();
        for &split_factor in &or(&self.split_factor, hw.array.split_factor) {
            for &cap in &caps {
                for &block_size in &or(&self.block_size, hw.block_size) {
                    for &group_size in &or(&self.group_size, hw.prune.group_size) {
                        for &sram_bandwidth in &or(&self.sram_bandwidth, hw.im2col.sram_bandwidth) {
                            out.push(SweepPoint {
                                split_factor,
                                reserved_buf_cap: Capacity(cap),
                                block_size,
                                group_size,
                                sram_bandwidth,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub point: SweepPoint,
    pub rows: Vec<ReportRow>,
}

/// Runs every grid point; independent points run on worker threads and the
/// results come back in grid order.
pub fn sweep(
    cfg: &NetworkConfig,
    grid: &SweepGrid,
    inputs: &[FeatureMap],
    opts: RunOptions,
) -> Result<Vec<SweepResult>> {
    let points = grid.points(cfg);
    let slots: Vec<Mutex<Option<Result<Vec<ReportRow>>>>> = points.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(points.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= points.len() {
                    break;
                }
                let c = points[i].apply(cfg);
                let r = run_network(&c, inputs.to_vec(), opts).map(|run| run.reports.iter().map(|r| r.row()).collect());
                *slots[i].lock().expect("sweep slot") = Some(r);
            });
        }
    });
    points
        .into_iter()
        .zip(slots)
        .map(|(point, slot)| {
            let rows = slot.into_inner().expect("sweep slot").expect("every point ran")?;
            Ok(SweepResult { point, rows })
        })
        .collect()
}

#[derive(Serialize)]
struct SweepRow<'a> {
    point: usize,
    #[serde(flatten)]
    params: &'a SweepPoint,
    #[serde(flatten)]
    row: &'a ReportRow,
}

/// One row per (grid point, layer): the point's parameters followed by the
/// layer report columns.
pub fn write_sweep(results: &[SweepResult], format: ReportFormat, mut out: impl std::io::Write) -> Result<()> {
    let fmt = |e: std::io::Error| Error::Format(e.to_string());
    match format {
        ReportFormat::Json => {
            let rows: Vec<SweepRow> = results
                .iter()
                .enumerate()
                .flat_map(|(i, r)| {
                    r.rows.iter().map(move |row| SweepRow {
                        point: i,
                        params: &r.point,
                        row,
                    })
                })
                .collect();
            serde_json::to_writer_pretty(&mut out, &rows).map_err(|e| Error::Format(e.to_string()))?;
            out.write_all(b"\n").map_err(fmt)?;
        }
        ReportFormat::Csv => {
            // csv cannot flatten, so the two halves are rendered separately
            let mut header_done = false;
            for (i, r) in results.iter().enumerate() {
                let params = render_rows(&[r.point], ReportFormat::Csv)?;
                let (ph, pv) = params.trim_end().split_once('\n').expect("header and record");
                let body = render_rows(&r.rows, ReportFormat::Csv)?;
                let mut lines = body.lines();
                let Some(rh) = lines.next() else { continue };
                if !header_done {
                    writeln!(out, "point,{ph},{rh}").map_err(fmt)?;
                    header_done = true;
                }
                for l in lines {
                    writeln!(out, "{i},{pv},{l}").map_err(fmt)?;
                }
            }
        }
    }
    Ok(())
}

pub fn render_sweep(results: &[SweepResult], format: ReportFormat) -> Result<String> {
    let mut buf = Vec::new();
    write_sweep(results, format, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}
