//! Hardware Im2Col unit: input controller, ring of patch units with
//! new/neighbor/reserved buffers, output controller, plus the bypass path for
//! non-overlapping windows and pooling on PU outputs.

mod config;
mod engine;
mod schedule;
mod timing;

pub(crate) use config::capacity;
pub use config::{Im2ColConfig, UNBOUNDED};
pub use engine::{
    assemble_tiles, simulate_bypass, simulate_im2col, simulate_im2col_range, simulate_pool, Im2ColEngine, Im2ColMode,
    Im2ColStats, Tile,
};
pub use schedule::{classify_sources, PatchId, PatchSchedule, ScheduleSlot, Source};
pub use timing::{bypass_cycles, estimate_cycles, step_cycles, StepLoad};
