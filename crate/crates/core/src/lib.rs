//! Simulator for a sparse CNN inference accelerator: an Im2Col engine built
//! from ring-connected patch units feeding a reconfigurable output-stationary
//! systolic array that consumes bitmap block-sparse weights and skips zero
//! blocks on both operands.
//!
//! Every simulated datapath produces bit-exact results that are checked
//! against the plain software references in [`model`].

pub mod compressor;
pub mod error;
pub mod gemm;
pub mod im2col;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod runner;
pub mod sparse;
pub mod tensorbin;

pub use error::{Error, Result};
