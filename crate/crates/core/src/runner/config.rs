//! Network description files (TOML).
//!
//! ```toml
//! name = "toy"
//! verify = true
//!
//! [input]
//! seed = 7
//!
//! [hardware]
//! block_size = 8
//! bank_count = 4
//! [hardware.array]
//! split_factor = 2
//!
//! [[layers]]
//! name = "conv1"
//! kind = "conv"
//! channels = 3
//! in_h = 16
//! in_w = 16
//! filters = 8
//! kernel_h = 3
//! kernel_w = 3
//! weights = { seed = 1, block_sparsity = 0.5 }
//! ```
//!
//! Omitted sections take their defaults. `weights` is either
//! `{ file = "path" }` (TensorBin or SBSW, detected by magic; relative paths
//! resolve against the config file) or a synthetic generator.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gemm::ArrayConfig;
use crate::im2col::Im2ColConfig;
use crate::metrics::EnergyCostTable;
use crate::model::{LayerKind, LayerSpec};
use crate::pipeline::AcceleratorConfig;
use crate::sparse::PruneConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HardwareConfig {
    pub array: ArrayConfig,
    pub im2col: Im2ColConfig,
    pub secondary_im2col: Im2ColConfig,
    /// Compressor block size Bz.
    pub block_size: usize,
    /// Weight SRAM banks.
    pub bank_count: usize,
    pub prune: PruneConfig,
    pub energy: EnergyCostTable,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        let acc = AcceleratorConfig::default();
        HardwareConfig {
            array: acc.array,
            im2col: acc.im2col,
            secondary_im2col: acc.secondary_im2col,
            block_size: acc.block_size,
            bank_count: 4,
            prune: PruneConfig::default(),
            energy: EnergyCostTable::default(),
        }
    }
}

impl HardwareConfig {
    pub fn accelerator(&self) -> AcceleratorConfig {
        AcceleratorConfig {
            array: self.array.clone(),
            im2col: self.im2col.clone(),
            secondary_im2col: self.secondary_im2col.clone(),
            block_size: self.block_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.accelerator().validate()?;
        self.energy.validate()?;
        if self.bank_count == 0 || self.prune.group_size == 0 {
            return Err(Error::InvalidConfig(
                "bank_count and prune.group_size must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Synthetic input used when no tensor file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputSpec {
    pub seed: u64,
    pub batch: usize,
    /// Fraction of elements forced to zero.
    pub zero_fraction: f64,
    /// Values are drawn from `[-amplitude, amplitude]`.
    pub amplitude: i16,
}

impl Default for InputSpec {
    fn default() -> Self {
        InputSpec {
            seed: 0,
            batch: 1,
            zero_fraction: 0.0,
            amplitude: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSource {
    File {
        file: PathBuf,
    },
    Synthetic {
        seed: u64,
        /// Fraction of G-tall blocks that are all zero.
        #[serde(default)]
        block_sparsity: f64,
        /// Fraction of remaining values that are zero.
        #[serde(default)]
        zero_fraction: f64,
        #[serde(default = "default_amplitude")]
        amplitude: i16,
    },
}

fn default_amplitude() -> i16 {
    64
}

impl WeightSource {
    pub fn synthetic(seed: u64, block_sparsity: f64) -> Self {
        WeightSource::Synthetic {
            seed,
            block_sparsity,
            zero_fraction: 0.0,
            amplitude: default_amplitude(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub spec: LayerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightSource>,
}

impl LayerEntry {
    pub fn new(name: &str, spec: LayerSpec, weights: Option<WeightSource>) -> Self {
        LayerEntry {
            name: Some(name.to_string()),
            spec,
            weights,
        }
    }

    pub fn display_name(&self, index: usize) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("{}{}", self.spec.kind.as_str(), index))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub verify: bool,
    #[serde(default)]
    pub input: InputSpec,
    #[serde(default)]
    pub hardware: HardwareConfig,
    pub layers: Vec<LayerEntry>,
    /// Directory that relative weight paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl NetworkConfig {
    pub fn new(name: &str, layers: Vec<LayerEntry>) -> Self {
        NetworkConfig {
            name: name.to_string(),
            verify: false,
            input: InputSpec::default(),
            hardware: HardwareConfig::default(),
            layers,
            base_dir: PathBuf::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: NetworkConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = NetworkConfig::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Layer specs are valid and consecutive layers chain.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("network has no layers".into()));
        }
        self.hardware.validate()?;
        for (i, l) in self.layers.iter().enumerate() {
            l.spec
                .validate()
                .map_err(|e| Error::InvalidLayer(format!("layer {i}: {e}")))?;
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            let (a, b) = (&pair[0].spec, &pair[1].spec);
            if a.output_dims() != b.input_dims() {
                return Err(Error::ChainMismatch {
                    from: i,
                    to: i + 1,
                    detail: format!("{:?} output vs {:?} input", a.output_dims(), b.input_dims()),
                });
            }
        }
        Ok(())
    }

    pub fn has_weights(kind: LayerKind) -> bool {
        matches!(kind, LayerKind::Conv | LayerKind::FullyConnected)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"
name = "toy"
verify = true

[hardware.array]
split_factor = 2

[hardware.im2col]
reserved_buf_cap = "unbounded"

[[layers]]
name = "conv1"
kind = "conv"
channels = 2
in_h = 8
in_w = 8
filters = 4
kernel_h = 3
kernel_w = 3
weights = { seed = 3, block_sparsity = 0.5 }

[[layers]]
kind = "max_pool"
channels = 4
in_h = 6
in_w = 6
kernel_h = 2
kernel_w = 2
stride = 2
"#;

    #[test]
    fn parses_sections_and_defaults() {
        let cfg = NetworkConfig::from_toml(TOY).unwrap();
        assert!(cfg.verify);
        assert_eq!(cfg.hardware.array.split_factor, 2);
        assert_eq!(cfg.hardware.array.rows, 128);
        assert_eq!(cfg.hardware.block_size, 8);
        assert_eq!(cfg.layers.len(), 2);
        assert_eq!(cfg.layers[1].display_name(1), "max_pool1");
        assert_eq!(cfg.layers[0].weights, Some(WeightSource::synthetic(3, 0.5)));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = NetworkConfig::from_toml(TOY).unwrap();
        let again = NetworkConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn chain_mismatch_reported() {
        let bad = TOY.replace("in_h = 6", "in_h = 4").replace("in_w = 6", "in_w = 4");
        match NetworkConfig::from_toml(&bad) {
            Err(Error::ChainMismatch { from: 0, to: 1, .. }) => {}
            other => panic!("expected chain mismatch, got {other:?}"),
        }
    }

    #[test]
    fn parse_error_is_config_error() {
        assert!(matches!(
            NetworkConfig::from_toml("layers = 3"),
            Err(Error::ConfigParse(_))
        ));
    }
}
