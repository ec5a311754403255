//! Desk-scale layer lists shaped after well-known CNNs, with synthetic
//! weights. Branches and residual additions are flattened into a plain
//! chain; only the layer shapes matter to the simulator.

use crate::error::{Error, Result};
use crate::model::{LayerKind, LayerSpec};
use crate::runner::config::{LayerEntry, NetworkConfig, WeightSource};

pub const NAMES: [&str; 4] = ["alexnet", "vgg", "googlenet", "resnet"];

struct Builder {
    c: usize,
    h: usize,
    w: usize,
    layers: Vec<LayerEntry>,
}

impl Builder {
    fn new(c: usize, h: usize, w: usize) -> Self {
        Builder {
            c,
            h,
            w,
            layers: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, spec: LayerSpec, sparsity: Option<f64>) {
        let (c, h, w) = spec.output_dims();
        let seed = self.layers.len() as u64 + 1;
        let weights = sparsity.map(|s| WeightSource::synthetic(seed, s));
        self.layers.push(LayerEntry::new(name, spec, weights));
        (self.c, self.h, self.w) = (c, h, w);
    }

    fn conv(&mut self, name: &str, filters: usize, k: usize, stride: usize, pad: usize, sparsity: f64) -> &mut Self {
        let spec = LayerSpec::conv(self.c, self.h, self.w, filters, k, k, stride, pad)
            .with_relu(true)
            .with_shift(8);
        self.push(name, spec, Some(sparsity));
        self
    }

    fn pool(&mut self, name: &str, kind: LayerKind, k: usize, stride: usize) -> &mut Self {
        let spec = LayerSpec::pool(kind, self.c, self.h, self.w, k, stride);
        self.push(name, spec, None);
        self
    }

    fn fc(&mut self, name: &str, out: usize, relu: bool, sparsity: f64) -> &mut Self {
        let spec = LayerSpec {
            channels: self.c,
            in_h: self.h,
            in_w: self.w,
            ..LayerSpec::fully_connected(self.c * self.h * self.w, out, 1)
        }
        .with_relu(relu)
        .with_shift(8);
        self.push(name, spec, Some(sparsity));
        self
    }

    fn build(&mut self, name: &str) -> NetworkConfig {
        NetworkConfig::new(name, std::mem::take(&mut self.layers))
    }
}

pub fn gen_net(name: &str) -> Result<NetworkConfig> {
    use LayerKind::{AvgPool, MaxPool};
    let cfg = match name {
        "alexnet" => Builder::new(3, 63, 63)
            .conv("conv1", 64, 11, 4, 0, 0.0)
            .pool("pool1", MaxPool, 2, 2)
            .conv("conv2", 192, 5, 1, 2, 0.5)
            .pool("pool2", MaxPool, 3, 2)
            .conv("conv3", 384, 3, 1, 1, 0.5)
            .conv("conv4", 256, 3, 1, 1, 0.5)
            .conv("conv5", 256, 3, 1, 1, 0.5)
            .pool("pool5", MaxPool, 3, 3)
            .fc("fc6", 1024, true, 0.7)
            .fc("fc7", 1024, true, 0.7)
            .fc("fc8", 10, false, 0.5)
            .build(name),
        "vgg" => Builder::new(3, 32, 32)
            .conv("conv1_1", 32, 3, 1, 1, 0.0)
            .conv("conv1_2", 32, 3, 1, 1, 0.5)
            .pool("pool1", MaxPool, 2, 2)
            .conv("conv2_1", 64, 3, 1, 1, 0.5)
            .conv("conv2_2", 64, 3, 1, 1, 0.5)
            .pool("pool2", MaxPool, 2, 2)
            .conv("conv3_1", 128, 3, 1, 1, 0.5)
            .conv("conv3_2", 128, 3, 1, 1, 0.5)
            .pool("pool3", MaxPool, 2, 2)
            .fc("fc1", 256, true, 0.7)
            .fc("fc2", 10, false, 0.5)
            .build(name),
        "googlenet" => Builder::new(3, 33, 33)
            .conv("conv1", 64, 7, 2, 3, 0.0)
            .pool("pool1", MaxPool, 3, 2)
            .conv("conv2_reduce", 64, 1, 1, 0, 0.5)
            .conv("conv2", 192, 3, 1, 1, 0.5)
            .pool("pool2", MaxPool, 2, 2)
            .conv("inception_1x1", 64, 1, 1, 0, 0.5)
            .conv("inception_3x3", 128, 3, 1, 1, 0.5)
            .conv("inception_5x5", 32, 5, 1, 2, 0.5)
            .pool("avgpool", AvgPool, 4, 4)
            .fc("fc", 10, false, 0.5)
            .build(name),
        "resnet" => Builder::new(3, 33, 33)
            .conv("conv1", 16, 3, 1, 1, 0.0)
            .conv("res1a", 16, 3, 1, 1, 0.5)
            .conv("res1b", 16, 3, 1, 1, 0.5)
            .conv("res2a", 32, 3, 2, 1, 0.5)
            .conv("res2b", 32, 3, 1, 1, 0.5)
            .conv("res3a", 64, 3, 2, 1, 0.5)
            .conv("res3b", 64, 3, 1, 1, 0.5)
            .pool("avgpool", AvgPool, 9, 9)
            .fc("fc", 10, false, 0.5)
            .build(name),
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown network {other:?}; known: {}",
                NAMES.join(", ")
            )))
        }
    };
    cfg.validate()?;
    Ok(cfg)
}
