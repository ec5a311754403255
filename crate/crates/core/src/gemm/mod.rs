//! Reconfigurable systolic array.

mod config;
mod engine;
mod schedule;

pub use config::{configure, ArrayConfig, PassPlan, Placement};
pub use engine::{simulate_fc, simulate_gemm, GemmEngine, GemmStats};
pub use schedule::schedule_positions;
