//! Im2Col timing: each wave of PUs costs the slower of input-controller
//! delivery and the busiest PU's one-element-per-cycle assembly (or its ring
//! link, if that is slower), plus one ring hop.

use serde::Serialize;

use crate::im2col::config::Im2ColConfig;
use crate::im2col::engine::{Im2ColMode, Im2ColStats};

/// Work done by one wave of PUs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct StepLoad {
    /// Elements fetched from SRAM during the wave.
    pub new_elements: usize,
    /// Elements assembled by the busiest PU.
    pub max_pu_elements: usize,
    /// Elements received over the ring by the busiest link.
    pub max_forwarded: usize,
    /// Patch index of the wave's last patch.
    pub last_patch: usize,
}

pub fn step_cycles(load: &StepLoad, cfg: &Im2ColConfig) -> u64 {
    let delivery = load.new_elements.div_ceil(cfg.sram_bandwidth.max(1));
    let ring = load.max_forwarded.div_ceil(cfg.ring_bandwidth.max(1));
    (delivery.max(load.max_pu_elements).max(ring) + 1) as u64
}

pub fn bypass_cycles(elements: usize, cfg: &Im2ColConfig) -> u64 {
    elements.div_ceil(cfg.sram_bandwidth.max(1)) as u64
}

/// Cycle estimate for a finished run, recomputed from its per-wave loads.
pub fn estimate_cycles(stats: &Im2ColStats, cfg: &Im2ColConfig) -> u64 {
    match stats.mode {
        Im2ColMode::Bypass => bypass_cycles(stats.elements_emitted, cfg),
        Im2ColMode::PatchUnits => stats.steps.iter().map(|s| step_cycles(s, cfg)).sum(),
    }
}
