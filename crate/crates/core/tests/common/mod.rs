#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use convsim_core::gemm::ArrayConfig;
use convsim_core::im2col::{Im2ColConfig, UNBOUNDED};
use convsim_core::model::{FeatureMap, LayerKind, LayerSpec, WeightMatrix};
use convsim_core::pipeline::AcceleratorConfig;
use convsim_core::runner::synthetic_weights;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Output extent and input extent for a kernel/stride/padding triple, with
/// the input bounded by `max_in`.
fn extent(rng: &mut ChaCha8Rng, k: usize, t: usize, p: usize, max_in: usize) -> Option<usize> {
    let max_out = (max_in + 2 * p).checked_sub(k)? / t + 1;
    for _ in 0..8 {
        let out = rng.gen_range(1..=max_out);
        let padded = (out - 1) * t + k;
        if padded > 2 * p && padded - 2 * p <= max_in {
            return Some(padded - 2 * p);
        }
    }
    None
}

/// Conv layer in the randomized-acceptance envelope: W,H <= 32, C <= 8,
/// F <= 160, kernels from {1,2,3,5}, stride from {1, 2, kernel}, padding 0/1.
pub fn random_conv(rng: &mut ChaCha8Rng, max_in: usize, max_filters: usize) -> LayerSpec {
    loop {
        let kh = *[1, 2, 3, 5].choose(rng).unwrap();
        let kw = *[1, 2, 3, 5].choose(rng).unwrap();
        let t = *[1, 2, kh.max(kw)].choose(rng).unwrap();
        let p = rng.gen_range(0..=1);
        let (Some(h), Some(w)) = (extent(rng, kh, t, p, max_in), extent(rng, kw, t, p, max_in)) else {
            continue;
        };
        let c = rng.gen_range(1..=8);
        let f = rng.gen_range(1..=max_filters);
        let mut layer = LayerSpec::conv(c, h, w, f, kh, kw, t, p)
            .with_relu(rng.gen_bool(0.5))
            .with_shift(rng.gen_range(0..=10));
        if rng.gen_bool(0.3) {
            layer = layer.with_bias((0..f).map(|_| rng.gen_range(-500..=500)).collect());
        }
        if layer.validate().is_ok() {
            return layer;
        }
    }
}

pub fn random_pool(rng: &mut ChaCha8Rng) -> LayerSpec {
    loop {
        let k = rng.gen_range(1..=3);
        let t = *[1, 2, k].choose(rng).unwrap();
        let p = if k > 1 { rng.gen_range(0..=1) } else { 0 };
        let Some(h) = extent(rng, k, t, p, 24) else { continue };
        let Some(w) = extent(rng, k, t, p, 24) else { continue };
        let kind = if rng.gen_bool(0.5) {
            LayerKind::MaxPool
        } else {
            LayerKind::AvgPool
        };
        let layer = LayerSpec::pool(kind, rng.gen_range(1..=6), h, w, k, t).with_padding(p);
        if layer.validate().is_ok() {
            return layer;
        }
    }
}

/// Random map with a fraction of scattered zeros and, sometimes, whole zero
/// channels so that entire feature blocks vanish.
pub fn random_input(rng: &mut ChaCha8Rng, layer: &LayerSpec, zero_fraction: f64, amplitude: i16) -> FeatureMap {
    let dead: Vec<bool> = (0..layer.channels).map(|_| rng.gen_bool(zero_fraction * 0.5)).collect();
    FeatureMap::from_fn(layer.channels, layer.in_h, layer.in_w, |c, _, _| {
        if dead[c] || rng.gen_bool(zero_fraction) {
            0
        } else {
            rng.gen_range(-amplitude..=amplitude)
        }
    })
}

pub fn random_weights(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    group: usize,
    block_sparsity: f64,
) -> WeightMatrix {
    let amp = *[3i16, 127, 2047].choose(rng).unwrap();
    let zero = rng.gen_range(0.0..0.3);
    synthetic_weights(rows, cols, group, rng.gen(), block_sparsity, zero, amp)
}

pub fn random_accelerator(rng: &mut ChaCha8Rng) -> AcceleratorConfig {
    let cap = *[0, 16, 256, 8192, UNBOUNDED].choose(rng).unwrap();
    let im2col = Im2ColConfig {
        pu_count: rng.gen_range(1..=6),
        reserved_buf_cap: cap,
        neighbor_buf_cap: *[4, 64, UNBOUNDED].choose(rng).unwrap(),
        sram_bandwidth: rng.gen_range(1..=8),
        ring_bandwidth: rng.gen_range(1..=3),
        ring_forwarding: rng.gen_bool(0.8),
        auto_bypass: rng.gen_bool(0.7),
        ..Im2ColConfig::default()
    };
    AcceleratorConfig {
        array: ArrayConfig {
            split_factor: *[1, 2, 4].choose(rng).unwrap(),
            regs_per_pe: rng.gen_range(1..=4),
            ..ArrayConfig::default()
        },
        secondary_im2col: Im2ColConfig {
            pu_count: rng.gen_range(1..=3),
            ..im2col.clone()
        },
        im2col,
        block_size: *[1, 2, 4, 8, 16].choose(rng).unwrap(),
    }
}

/// Runs `body` on a fresh seed per case; on panic the seed is in the message.
pub fn cases(n: usize, base: u64, mut body: impl FnMut(&mut ChaCha8Rng)) {
    for i in 0..n {
        let seed = base.wrapping_mul(1_000_003).wrapping_add(i as u64);
        let mut r = rng(seed);
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| body(&mut r)));
        if let Err(e) = outcome {
            eprintln!("failing case seed {seed}");
            std::panic::resume_unwind(e);
        }
    }
}
