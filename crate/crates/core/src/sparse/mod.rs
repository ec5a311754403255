//! Group-wise pruning and the bitmap block-sparse weight codec.

mod format;
mod prune;
pub mod sbsw;

pub use format::{csr_bytes, footprint_blocksparse, footprint_csr, Bitmap, BlockIndex, BlockRef, BlockSparseWeights};
pub use prune::{block_below, blocks_per_column, prune_groupwise, BlockNorm, PruneConfig};
