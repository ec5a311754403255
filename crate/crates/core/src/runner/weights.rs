//! Weight loading and synthetic data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{FeatureMap, LayerSpec, WeightMatrix};
use crate::runner::config::{InputSpec, NetworkConfig, WeightSource};
use crate::sparse::{prune_groupwise, sbsw, BlockSparseWeights, PruneConfig};
use crate::tensorbin;

fn draw(rng: &mut ChaCha8Rng, zero_fraction: f64, amplitude: i16) -> i16 {
    if zero_fraction > 0.0 && rng.gen_bool(zero_fraction.clamp(0.0, 1.0)) {
        0
    } else {
        rng.gen_range(-amplitude..=amplitude)
    }
}

/// Random F x K matrix; each G-tall block is zeroed with probability
/// `block_sparsity`.
pub fn synthetic_weights(
    rows: usize,
    cols: usize,
    group: usize,
    seed: u64,
    block_sparsity: f64,
    zero_fraction: f64,
    amplitude: i16,
) -> WeightMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = WeightMatrix::zeros(rows, cols);
    let g = group.max(1);
    for c in 0..cols {
        for b in 0..rows.div_ceil(g) {
            if block_sparsity > 0.0 && rng.gen_bool(block_sparsity.clamp(0.0, 1.0)) {
                continue;
            }
            for r in b * g..((b + 1) * g).min(rows) {
                w.set(r, c, draw(&mut rng, zero_fraction, amplitude));
            }
        }
    }
    w
}

pub fn synthetic_input(layer: &LayerSpec, spec: &InputSpec) -> Vec<FeatureMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.batch.max(1))
        .map(|_| {
            FeatureMap::from_fn(layer.channels, layer.in_h, layer.in_w, |_, _, _| {
                draw(&mut rng, spec.zero_fraction, spec.amplitude)
            })
        })
        .collect()
}

/// Dense weights of a layer before pruning.
pub fn dense_weights(cfg: &NetworkConfig, index: usize) -> Result<WeightMatrix> {
    let entry = &cfg.layers[index];
    let (rows, cols) = (entry.spec.filters, entry.spec.shared_dim());
    let source = entry
        .weights
        .clone()
        .unwrap_or_else(|| WeightSource::synthetic(index as u64, 0.0));
    let w = match source {
        WeightSource::Synthetic {
            seed,
            block_sparsity,
            zero_fraction,
            amplitude,
        } => synthetic_weights(
            rows,
            cols,
            cfg.hardware.prune.group_size,
            seed,
            block_sparsity,
            zero_fraction,
            amplitude,
        ),
        WeightSource::File { file } => load_weight_file(&cfg.resolve(&file))?,
    };
    if w.rows() != rows || w.cols() != cols {
        return Err(Error::DimensionMismatch(format!(
            "layer {index} weights are {}x{}, layer needs {rows}x{cols}",
            w.rows(),
            w.cols()
        )));
    }
    Ok(w)
}

/// TensorBin (rank 2 or 4) or SBSW, by magic.
pub fn load_weight_file(path: &std::path::Path) -> Result<WeightMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(sbsw::MAGIC) {
        sbsw::decode(&bytes)?.decode()
    } else {
        tensorbin::decode(&bytes)?.into_weight_matrix()
    }
}

/// Prunes and encodes in the layout the array reads.
pub fn prepare_weights(w: &WeightMatrix, prune: &PruneConfig, bank_count: usize) -> Result<BlockSparseWeights> {
    BlockSparseWeights::encode(&prune_groupwise(w, prune), prune.group_size, bank_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_deterministic() {
        let a = synthetic_weights(8, 20, 4, 9, 0.5, 0.1, 64);
        let b = synthetic_weights(8, 20, 4, 9, 0.5, 0.1, 64);
        assert_eq!(a, b);
        assert_ne!(a, synthetic_weights(8, 20, 4, 10, 0.5, 0.1, 64));
    }

    #[test]
    fn full_block_sparsity_gives_zero_matrix() {
        assert_eq!(synthetic_weights(8, 5, 4, 1, 1.0, 0.0, 64).nnz(), 0);
    }

    #[test]
    fn block_sparsity_zeroes_whole_blocks() {
        let w = synthetic_weights(16, 64, 4, 3, 0.6, 0.0, 64);
        let s = BlockSparseWeights::encode(&w, 4, 4).unwrap();
        let zero_blocks = s.m2().count_zeros() + s.m1().count_zeros() * 4;
        let frac = zero_blocks as f64 / (16 * 64 / 4) as f64;
        assert!((0.45..0.75).contains(&frac), "{frac}");
    }
}
