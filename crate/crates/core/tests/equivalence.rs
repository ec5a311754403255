mod common;

use rand::Rng;

use convsim_core::gemm::{simulate_gemm, ArrayConfig};
use convsim_core::im2col::Im2ColMode;
use convsim_core::model::{
    conv_reference, fc_reference, gemm_reference, im2col_reference, pool_reference, reshape_output, AccWidth,
    FeatureMap, Im2ColMatrix, LayerSpec,
};
use convsim_core::pipeline::{fc_input, fc_outputs, run_conv, run_fc, run_pool};
use convsim_core::sparse::BlockSparseWeights;

use common::{cases, random_accelerator, random_conv, random_input, random_pool, random_weights};

#[test]
fn conv_pipeline_matches_both_oracles() {
    cases(50, 11, |rng| {
        let layer = random_conv(rng, 24, 96);
        let hw = random_accelerator(rng);
        let group = rng.gen_range(1..=8);
        let sparsity = rng.gen_range(0.0..0.9);
        let w = random_weights(rng, layer.filters, layer.shared_dim(), group, sparsity);
        let s = BlockSparseWeights::encode(&w, group, rng.gen_range(1..=4)).unwrap();
        let zeros = rng.gen_range(0.0..0.9);
        let x = random_input(rng, &layer, zeros, 255);

        let run = run_conv(&x, &s, &layer, &hw).unwrap();
        let direct = conv_reference(
            &x,
            &w.to_filters(layer.channels, layer.kernel_h, layer.kernel_w).unwrap(),
            &layer,
        )
        .unwrap();
        let acc = gemm_reference(&w, &im2col_reference(&x, &layer).unwrap(), AccWidth::Bits32).unwrap();
        assert_eq!(run.accumulators.as_ref().unwrap().data(), acc.data(), "{layer:?}");
        assert_eq!(reshape_output(&acc, &layer).unwrap(), direct);
        assert_eq!(run.output, direct);
        assert_eq!(
            run.gemm.streamed_positions + run.gemm.skipped_by_m1 + run.gemm.skipped_by_feature_bitmap,
            run.gemm.tile_passes * layer.shared_dim()
        );
        if layer.is_disjoint() && hw.im2col.auto_bypass {
            assert_eq!(run.mode, Im2ColMode::Bypass);
        }
    });
}

#[test]
fn overflow_only_counted_never_wraps() {
    let layer = LayerSpec::conv(8, 4, 4, 2, 3, 3, 1, 1);
    let x = FeatureMap::from_fn(8, 4, 4, |_, _, _| i16::MAX);
    let w = convsim_core::model::WeightMatrix::new(2, 72, vec![i16::MAX; 144]).unwrap();
    let s = BlockSparseWeights::encode(&w, 4, 4).unwrap();
    for acc_width in [AccWidth::Bits32, AccWidth::Bits24] {
        let hw = convsim_core::pipeline::AcceleratorConfig {
            array: ArrayConfig {
                acc_width,
                ..ArrayConfig::default()
            },
            ..Default::default()
        };
        let run = run_conv(&x, &s, &layer, &hw).unwrap();
        let acc = run.accumulators.unwrap();
        assert_eq!(acc.get(0, 5), 72 * i64::from(i16::MAX) * i64::from(i16::MAX));
        assert!(acc.overflow_events() > 0);
        assert!(run.output.data().iter().all(|&v| v == i16::MAX));
    }
}

#[test]
fn gemm_skipping_is_sound() {
    cases(100, 12, |rng| {
        let (rows, k, cols) = (rng.gen_range(1..=40), rng.gen_range(1..=80), rng.gen_range(1..=70));
        let group = rng.gen_range(1..=6);
        let sparsity = rng.gen_range(0.0..0.95);
        let w = random_weights(rng, rows, k, group, sparsity);
        let zero_rows: Vec<bool> = (0..k).map(|_| rng.gen_bool(0.4)).collect();
        let mut data = vec![0i16; k * cols];
        for (i, v) in data.iter_mut().enumerate() {
            if !zero_rows[i % k] && rng.gen_bool(0.7) {
                *v = rng.gen_range(-300..=300);
            }
        }
        let m = Im2ColMatrix::from_columns(k, cols, data).unwrap();
        let s = BlockSparseWeights::encode(&w, group, 4).unwrap();
        let cfg = ArrayConfig::default().with_split([1, 2, 4][rng.gen_range(0..3)]);
        let expected = gemm_reference(&w, &m, AccWidth::Bits32).unwrap();
        let mut prev = usize::MAX;
        for bz in [1, 2, 4, 8, 16, 32] {
            let (out, st) = simulate_gemm(&s, &m, bz, &cfg).unwrap();
            assert_eq!(out.data(), expected.data(), "bz {bz}");
            assert!(st.skipped_by_feature_bitmap <= prev, "bz {bz}");
            prev = st.skipped_by_feature_bitmap;
        }
    });
}

#[test]
fn fully_connected_matches_reference() {
    cases(40, 13, |rng| {
        let (n_in, n_out, batch) = (rng.gen_range(1..=300), rng.gen_range(1..=200), rng.gen_range(1..=40));
        let mut layer = LayerSpec::fully_connected(n_in, n_out, batch)
            .with_relu(rng.gen_bool(0.5))
            .with_shift(rng.gen_range(0..=8));
        if rng.gen_bool(0.5) {
            layer = layer.with_bias((0..n_out).map(|_| rng.gen_range(-100..=100)).collect());
        }
        let sparsity = rng.gen_range(0.0..0.8);
        let w = random_weights(rng, n_out, n_in, 4, sparsity);
        let s = BlockSparseWeights::encode(&w, 4, 4).unwrap();
        let xs: Vec<FeatureMap> = (0..batch).map(|_| random_input(rng, &layer, 0.3, 200)).collect();
        let hw = random_accelerator(rng);
        let (outs, run) = run_fc(&xs, &s, &layer, &hw).unwrap();
        let acc = fc_reference(&w, &fc_input(&xs, &layer).unwrap(), layer.bias.as_deref(), layer.relu).unwrap();
        let plain = gemm_reference(&w, &fc_input(&xs, &layer).unwrap(), AccWidth::Bits32).unwrap();
        assert_eq!(run.accumulators.unwrap().data(), plain.data());
        assert_eq!(outs, fc_outputs(&plain, &layer));
        for (b, o) in outs.iter().enumerate() {
            for f in 0..n_out {
                let v = acc.get(f, b);
                let expect = convsim_core::model::quant::saturate_i16(v >> layer.shift);
                assert_eq!(o.get(f, 0, 0), expect);
            }
        }
    });
}

#[test]
fn pooling_matches_reference() {
    cases(50, 14, |rng| {
        let layer = random_pool(rng);
        let x = random_input(rng, &layer, 0.2, 1000);
        let hw = random_accelerator(rng);
        let run = run_pool(&x, &layer, &hw).unwrap();
        assert_eq!(run.output, pool_reference(&x, &layer).unwrap(), "{layer:?}");
        assert_eq!(run.im2col.patches, layer.patch_count());
    });
}
