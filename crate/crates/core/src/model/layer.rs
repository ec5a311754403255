use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    FullyConnected,
    MaxPool,
    AvgPool,
}

impl LayerKind {
    pub fn is_pool(self) -> bool {
        matches!(self, LayerKind::MaxPool | LayerKind::AvgPool)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::FullyConnected => "fully_connected",
            LayerKind::MaxPool => "max_pool",
            LayerKind::AvgPool => "avg_pool",
        }
    }
}

/// Geometry and post-processing of one layer.
///
/// For fully connected layers the input feature map `(channels, in_h, in_w)`
/// is flattened to `channels * in_h * in_w` features and the output is a
/// `(filters, 1, 1)` map. Kernel, stride and padding are ignored there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_w: usize,
    pub in_h: usize,
    pub channels: usize,
    #[serde(default = "one")]
    pub kernel_h: usize,
    #[serde(default = "one")]
    pub kernel_w: usize,
    #[serde(default = "one")]
    pub filters: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
    #[serde(default = "one")]
    pub batch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<i16>>,
    #[serde(default)]
    pub relu: bool,
    /// Requantization right-shift applied to accumulators before saturating
    /// to 16 bits.
    #[serde(default)]
    pub shift: u32,
}

fn one() -> usize {
    1
}

impl LayerSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        channels: usize,
        in_h: usize,
        in_w: usize,
        filters: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        LayerSpec {
            kind: LayerKind::Conv,
            in_w,
            in_h,
            channels,
            kernel_h,
            kernel_w,
            filters,
            stride,
            padding,
            batch: 1,
            bias: None,
            relu: false,
            shift: 0,
        }
    }

    pub fn pool(kind: LayerKind, channels: usize, in_h: usize, in_w: usize, kernel: usize, stride: usize) -> Self {
        LayerSpec {
            kind,
            filters: channels,
            ..LayerSpec::conv(channels, in_h, in_w, channels, kernel, kernel, stride, 0)
        }
    }

    pub fn fully_connected(in_features: usize, out_features: usize, batch: usize) -> Self {
        LayerSpec {
            kind: LayerKind::FullyConnected,
            batch,
            ..LayerSpec::conv(in_features, 1, 1, out_features, 1, 1, 1, 0)
        }
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_relu(mut self, relu: bool) -> Self {
        self.relu = relu;
        self
    }

    pub fn with_shift(mut self, shift: u32) -> Self {
        self.shift = shift;
        self
    }

    pub fn with_bias(mut self, bias: Vec<i16>) -> Self {
        self.bias = Some(bias);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidLayer(msg));
        if self.in_w == 0 || self.in_h == 0 || self.channels == 0 {
            return bad(format!(
                "input dims must be positive, got C={} H={} W={}",
                self.channels, self.in_h, self.in_w
            ));
        }
        if self.kind == LayerKind::FullyConnected {
            if self.filters == 0 || self.batch == 0 {
                return bad("fully connected layer needs filters >= 1 and batch >= 1".into());
            }
        } else {
            if self.kernel_h == 0 || self.kernel_w == 0 || self.stride == 0 {
                return bad("kernel and stride must be >= 1".into());
            }
            if self.kind == LayerKind::Conv && self.filters == 0 {
                return bad("conv layer needs filters >= 1".into());
            }
            for (axis, extent, k) in [
                ("height", self.in_h, self.kernel_h),
                ("width", self.in_w, self.kernel_w),
            ] {
                let padded = extent + 2 * self.padding;
                if padded < k {
                    return bad(format!("kernel {k} larger than padded {axis} {padded}"));
                }
                if !(padded - k).is_multiple_of(self.stride) {
                    return bad(format!(
                        "{axis}: (extent {extent} + 2*{} - kernel {k}) not divisible by stride {}",
                        self.padding, self.stride
                    ));
                }
            }
        }
        if let Some(bias) = &self.bias {
            if bias.len() != self.out_channels() {
                return bad(format!(
                    "bias has {} entries, layer has {} outputs",
                    bias.len(),
                    self.out_channels()
                ));
            }
        }
        Ok(())
    }

    pub fn out_h(&self) -> usize {
        match self.kind {
            LayerKind::FullyConnected => 1,
            _ => (self.in_h + 2 * self.padding - self.kernel_h) / self.stride + 1,
        }
    }

    pub fn out_w(&self) -> usize {
        match self.kind {
            LayerKind::FullyConnected => 1,
            _ => (self.in_w + 2 * self.padding - self.kernel_w) / self.stride + 1,
        }
    }

    pub fn out_channels(&self) -> usize {
        match self.kind {
            LayerKind::Conv | LayerKind::FullyConnected => self.filters,
            LayerKind::MaxPool | LayerKind::AvgPool => self.channels,
        }
    }

    pub fn input_dims(&self) -> (usize, usize, usize) {
        (self.channels, self.in_h, self.in_w)
    }

    pub fn output_dims(&self) -> (usize, usize, usize) {
        (self.out_channels(), self.out_h(), self.out_w())
    }

    /// Length of the dimension shared by weight-matrix columns and Im2Col rows.
    pub fn shared_dim(&self) -> usize {
        match self.kind {
            LayerKind::FullyConnected => self.channels * self.in_h * self.in_w,
            _ => self.kernel_h * self.kernel_w * self.channels,
        }
    }

    /// Number of patches, i.e. Im2Col matrix columns.
    pub fn patch_count(&self) -> usize {
        self.out_h() * self.out_w()
    }

    pub fn kernel_area(&self) -> usize {
        self.kernel_h * self.kernel_w
    }

    /// Stride at least as large as the kernel in both directions: patches
    /// never overlap.
    pub fn is_disjoint(&self) -> bool {
        self.stride >= self.kernel_h && self.stride >= self.kernel_w
    }
}
