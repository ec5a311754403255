//! Layer-by-layer execution with optional oracle checks.

use crate::error::{Error, Result};
use crate::metrics::SimReport;
use crate::model::{conv_reference, pool_reference, FeatureMap, LayerKind, LayerSpec, WeightMatrix};
use crate::pipeline::{fc_input, fc_outputs, run_conv, run_fc, run_pool, LayerRun};
use crate::runner::config::NetworkConfig;
use crate::runner::weights::{dense_weights, prepare_weights};
use crate::sparse::BlockSparseWeights;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Compare every layer with the software reference.
    pub verify: bool,
    /// Corrupt the first simulated output element of this layer (for testing
    /// the checker).
    pub inject_fault: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct NetworkRun {
    pub outputs: Vec<FeatureMap>,
    pub reports: Vec<SimReport>,
}

/// First differing flat index, both values and the total mismatch count.
pub fn first_mismatch(expected: &[i16], actual: &[i16]) -> Option<(usize, i16, i16, usize)> {
    let mut first = None;
    let mut count = 0;
    for (i, (e, a)) in expected.iter().zip(actual).enumerate() {
        if e != a {
            count += 1;
            first.get_or_insert((i, *e, *a));
        }
    }
    count += expected.len().abs_diff(actual.len());
    match first {
        Some((i, e, a)) => Some((i, e, a, count)),
        None if count > 0 => Some((expected.len().min(actual.len()), 0, 0, count)),
        None => None,
    }
}

fn check(index: usize, name: &str, expected: &[FeatureMap], actual: &[FeatureMap]) -> Result<()> {
    let flat = |v: &[FeatureMap]| v.iter().flat_map(|m| m.data().iter().copied()).collect::<Vec<_>>();
    match first_mismatch(&flat(expected), &flat(actual)) {
        None => Ok(()),
        Some((i, e, a, n)) => Err(Error::Verification {
            layer: index,
            name: name.to_string(),
            index: i,
            expected: e.into(),
            actual: a.into(),
            mismatches: n,
        }),
    }
}

fn reference(layer: &LayerSpec, dense: Option<&WeightMatrix>, xs: &[FeatureMap]) -> Result<Vec<FeatureMap>> {
    match layer.kind {
        LayerKind::Conv => {
            let f =
                dense
                    .expect("conv layer has weights")
                    .to_filters(layer.channels, layer.kernel_h, layer.kernel_w)?;
            xs.iter().map(|x| conv_reference(x, &f, layer)).collect()
        }
        LayerKind::MaxPool | LayerKind::AvgPool => xs.iter().map(|x| pool_reference(x, layer)).collect(),
        LayerKind::FullyConnected => {
            let w = dense.expect("fc layer has weights");
            let acc = crate::model::gemm_reference(w, &fc_input(xs, layer)?, crate::model::AccWidth::Bits32)?;
            Ok(fc_outputs(&acc, layer))
        }
    }
}

/// Weights of every layer in the form the array reads them, plus the pruned
/// dense matrix the oracle uses.
pub fn load_weights(cfg: &NetworkConfig) -> Result<Vec<Option<(WeightMatrix, BlockSparseWeights)>>> {
    (0..cfg.layers.len())
        .map(|i| {
            if !NetworkConfig::has_weights(cfg.layers[i].spec.kind) {
                return Ok(None);
            }
            let w = dense_weights(cfg, i)?;
            let s = prepare_weights(&w, &cfg.hardware.prune, cfg.hardware.bank_count)?;
            Ok(Some((s.decode()?, s)))
        })
        .collect()
}

/// Runs every layer in order on the whole batch. Conv and pool layers process
/// the batch one sample at a time; FC layers take it as array columns.
pub fn run_network(cfg: &NetworkConfig, inputs: Vec<FeatureMap>, opts: RunOptions) -> Result<NetworkRun> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::Precondition("need at least one input map".into()));
    }
    let first = &cfg.layers[0].spec;
    for x in &inputs {
        if x.dims() != first.input_dims() {
            return Err(Error::DimensionMismatch(format!(
                "input is {:?}, first layer expects {:?}",
                x.dims(),
                first.input_dims()
            )));
        }
    }
    let weights = load_weights(cfg)?;
    let hw = cfg.hardware.accelerator();
    let table = &cfg.hardware.energy;
    let split = hw.array.split_factor;
    let mut xs = inputs;
    let mut reports = Vec::with_capacity(cfg.layers.len());

    for (i, entry) in cfg.layers.iter().enumerate() {
        let name = entry.display_name(i);
        let mut layer = entry.spec.clone();
        let w = weights[i].as_ref();
        let dram = w.map_or(0, |(_, s)| s.stored_values() as u64);

        let (mut outs, report) = match layer.kind {
            LayerKind::FullyConnected => {
                layer.batch = xs.len();
                let (outs, run) = run_fc(&xs, &w.expect("fc weights").1, &layer, &hw)?;
                (outs, SimReport::new(i, &name, layer.kind, split, &run, dram, table))
            }
            _ => {
                let mut outs = Vec::with_capacity(xs.len());
                let mut report: Option<SimReport> = None;
                for x in &xs {
                    let run: LayerRun = match layer.kind {
                        LayerKind::Conv => run_conv(x, &w.expect("conv weights").1, &layer, &hw)?,
                        _ => run_pool(x, &layer, &hw)?,
                    };
                    match report.as_mut() {
                        None => report = Some(SimReport::new(i, &name, layer.kind, split, &run, dram, table)),
                        Some(r) => r.absorb(&run, table, hw.array.cols),
                    }
                    outs.push(run.output);
                }
                (outs, report.expect("batch is non-empty"))
            }
        };

        if opts.inject_fault == Some(i) {
            let d = outs[0].data_mut();
            d[0] = d[0].wrapping_add(1);
        }
        if opts.verify || cfg.verify {
            let expected = reference(&layer, w.map(|(d, _)| d), &xs)?;
            check(i, &name, &expected, &outs)?;
        }
        reports.push(report);
        xs = outs;
    }
    Ok(NetworkRun { outputs: xs, reports })
}

/// The same network computed with the software references only.
pub fn reference_network(cfg: &NetworkConfig, inputs: Vec<FeatureMap>) -> Result<Vec<FeatureMap>> {
    cfg.validate()?;
    let weights = load_weights(cfg)?;
    let mut xs = inputs;
    for (i, entry) in cfg.layers.iter().enumerate() {
        let mut layer = entry.spec.clone();
        layer.batch = xs.len();
        xs = reference(&layer, weights[i].as_ref().map(|(d, _)| d), &xs)?;
    }
    Ok(xs)
}
