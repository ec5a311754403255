//! End-to-end driver: network configs, weight loading, layer chaining with
//! verification, sweeps and the network zoo.

mod config;
mod network;
mod sweep;
mod weights;
pub mod zoo;

pub use config::{HardwareConfig, InputSpec, LayerEntry, NetworkConfig, WeightSource};
pub use network::{first_mismatch, load_weights, reference_network, run_network, NetworkRun, RunOptions};
pub use sweep::{render_sweep, sweep, write_sweep, Capacity, SweepGrid, SweepPoint, SweepResult};
pub use weights::{dense_weights, load_weight_file, prepare_weights, synthetic_input, synthetic_weights};
pub use zoo::gen_net;
