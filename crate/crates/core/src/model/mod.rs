//! Domain types and the software reference datapath.

mod layer;
mod oracle;
pub mod quant;
mod tensor;

pub use layer::{LayerKind, LayerSpec};
pub use oracle::{
    conv_reference, fc_reference, flatten_filters, gemm_reference, im2col_reference, pool_reference, pool_window,
    reshape_output,
};
pub use quant::AccWidth;
pub use tensor::{shared_index, FeatureMap, FilterSet, Im2ColMatrix, OutputMatrix, WeightMatrix};
