mod common;

use rand::Rng;

use convsim_core::model::WeightMatrix;
use convsim_core::sparse::{footprint_csr, prune_groupwise, sbsw, BlockNorm, BlockSparseWeights, PruneConfig};

use common::{cases, random_weights};

/// Footprint counted straight from the dense matrix. A ragged last block is
/// stored padded to the full group.
fn footprint_oracle(w: &WeightMatrix, group: usize) -> usize {
    let blocks = w.rows().div_ceil(group);
    let mut live_cols = 0;
    let mut stored = 0;
    for c in 0..w.cols() {
        let col: Vec<i16> = (0..w.rows()).map(|r| w.get(r, c)).collect();
        if col.iter().all(|&v| v == 0) {
            continue;
        }
        live_cols += 1;
        for chunk in col.chunks(group) {
            if chunk.iter().any(|&v| v != 0) {
                stored += group;
            }
        }
    }
    w.cols().div_ceil(8) + (live_cols * blocks).div_ceil(8) + 2 * stored
}

#[test]
fn encode_decode_round_trip() {
    cases(100, 21, |rng| {
        let (rows, cols, group) = (rng.gen_range(1..=64), rng.gen_range(1..=200), rng.gen_range(1..=8));
        let sparsity = rng.gen_range(0.0..1.0);
        let w = random_weights(rng, rows, cols, group, sparsity);
        let banks = rng.gen_range(1..=8);
        let s = BlockSparseWeights::encode(&w, group, banks).unwrap();
        assert_eq!(s.decode().unwrap(), w);
        assert_eq!(s.footprint_bytes(), footprint_oracle(&w, group));
        assert_eq!(s.banks().len(), banks);

        let bytes = sbsw::encode(&s);
        let back = sbsw::decode(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.decode().unwrap(), w);
    });
}

#[test]
fn pruning_zeroes_whole_blocks_only() {
    cases(50, 22, |rng| {
        let (rows, cols, group) = (rng.gen_range(1..=32), rng.gen_range(1..=64), rng.gen_range(1..=6));
        let w = random_weights(rng, rows, cols, group, 0.0);
        let cfg = PruneConfig {
            group_size: group,
            threshold: rng.gen_range(0..3000),
            norm: if rng.gen_bool(0.5) {
                BlockNorm::MaxAbs
            } else {
                BlockNorm::L2
            },
        };
        let p = prune_groupwise(&w, &cfg);
        for c in 0..cols {
            for b in (0..rows).step_by(group) {
                let block = b..(b + group).min(rows);
                let kept = block.clone().all(|r| p.get(r, c) == w.get(r, c));
                let zeroed = block.clone().all(|r| p.get(r, c) == 0);
                assert!(kept || zeroed);
            }
        }
        assert!(p.nnz() <= w.nnz());
    });
}

#[test]
fn block_sparse_beats_csr_when_pruned() {
    cases(50, 23, |rng| {
        let (rows, cols) = (rng.gen_range(16..=128), rng.gen_range(64..=512));
        let sparsity = rng.gen_range(0.5..0.95);
        let w = random_weights(rng, rows, cols, 4, sparsity);
        let s = BlockSparseWeights::encode(&w, 4, 4).unwrap();
        assert!(s.footprint_bytes() < footprint_csr(&w), "{rows}x{cols} at {sparsity}");
    });
}

#[test]
fn corrupted_files_are_rejected() {
    let w = random_weights(&mut common::rng(5), 16, 40, 4, 0.5);
    let bytes = sbsw::encode(&BlockSparseWeights::encode(&w, 4, 4).unwrap());
    for cut in [0, 4, bytes.len() / 2, bytes.len() - 1] {
        assert!(sbsw::decode(&bytes[..cut]).is_err(), "truncated at {cut}");
    }
    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    assert!(sbsw::decode(&bad).is_err());
}
