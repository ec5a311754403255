use serde::{Deserialize, Serialize};

use crate::model::WeightMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockNorm {
    /// Largest absolute value in the block.
    #[default]
    MaxAbs,
    L2,
}

/// Group-wise pruning: a block is `group_size` consecutive weight-matrix rows
/// (filters) within one column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneConfig {
    #[serde(default = "default_group")]
    pub group_size: usize,
    #[serde(default)]
    pub threshold: u32,
    #[serde(default)]
    pub norm: BlockNorm,
}

fn default_group() -> usize {
    4
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            group_size: default_group(),
            threshold: 0,
            norm: BlockNorm::MaxAbs,
        }
    }
}

/// Number of G-row blocks covering `rows` filters; the last may be ragged.
pub fn blocks_per_column(rows: usize, group: usize) -> usize {
    rows.div_ceil(group)
}

/// True when the block's norm falls strictly below `threshold`.
/// L2 is compared squared so the test stays in exact integers.
pub fn block_below(values: impl Iterator<Item = i16>, threshold: u32, norm: BlockNorm) -> bool {
    let t = i64::from(threshold);
    match norm {
        BlockNorm::MaxAbs => values.map(|v| i64::from(v).abs()).max().unwrap_or(0) < t,
        BlockNorm::L2 => values.map(|v| i64::from(v) * i64::from(v)).sum::<i64>() < t * t,
    }
}

/// Zeroes every block whose norm is below the threshold. A norm equal to the
/// threshold is kept.
pub fn prune_groupwise(w: &WeightMatrix, cfg: &PruneConfig) -> WeightMatrix {
    let g = cfg.group_size.max(1);
    let mut out = w.clone();
    for col in 0..w.cols() {
        for b in 0..blocks_per_column(w.rows(), g) {
            let rows = b * g..((b + 1) * g).min(w.rows());
            if block_below(rows.clone().map(|r| w.get(r, col)), cfg.threshold, cfg.norm) {
                for r in rows {
                    out.set(r, col, 0);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_block_kept_zero_block_stays() {
        let w = WeightMatrix::new(4, 1, vec![3, -1, 0, 0]).unwrap();
        let cfg = PruneConfig {
            group_size: 2,
            threshold: 1,
            norm: BlockNorm::MaxAbs,
        };
        assert_eq!(prune_groupwise(&w, &cfg), w);
    }

    #[test]
    fn tie_is_kept() {
        let w = WeightMatrix::new(2, 2, vec![2, 1, -2, 1]).unwrap();
        let cfg = PruneConfig {
            group_size: 2,
            threshold: 2,
            norm: BlockNorm::MaxAbs,
        };
        assert_eq!(prune_groupwise(&w, &cfg).data(), &[2, 0, -2, 0]);
    }

    #[test]
    fn l2_norm() {
        // column 0: sqrt(9+16)=5, column 1: sqrt(9+9) < 5
        let w = WeightMatrix::new(2, 2, vec![3, 3, 4, 3]).unwrap();
        let cfg = PruneConfig {
            group_size: 2,
            threshold: 5,
            norm: BlockNorm::L2,
        };
        assert_eq!(prune_groupwise(&w, &cfg).data(), &[3, 0, 4, 0]);
    }

    #[test]
    fn ragged_last_block() {
        let w = WeightMatrix::new(3, 1, vec![9, 9, 1]).unwrap();
        let cfg = PruneConfig {
            group_size: 2,
            threshold: 2,
            norm: BlockNorm::MaxAbs,
        };
        assert_eq!(prune_groupwise(&w, &cfg).data(), &[9, 9, 0]);
    }

    fn matrix() -> impl Strategy<Value = WeightMatrix> {
        (1usize..10, 1usize..10).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-50i16..50, r * c).prop_map(move |d| WeightMatrix::new(r, c, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn zero_threshold_is_identity(w in matrix(), g in 1usize..5) {
            let cfg = PruneConfig { group_size: g, threshold: 0, norm: BlockNorm::MaxAbs };
            prop_assert_eq!(prune_groupwise(&w, &cfg), w);
        }

        #[test]
        fn idempotent(w in matrix(), g in 1usize..5, t in 0u32..60, l2 in any::<bool>()) {
            let norm = if l2 { BlockNorm::L2 } else { BlockNorm::MaxAbs };
            let cfg = PruneConfig { group_size: g, threshold: t, norm };
            let once = prune_groupwise(&w, &cfg);
            prop_assert_eq!(prune_groupwise(&once, &cfg), once);
        }
    }
}
