use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Capacity value meaning "never the bottleneck".
pub const UNBOUNDED: usize = usize::MAX;

/// One Im2Col unit: the input controller, a ring of patch units (PUs) and
/// the output controller.
///
/// Buffer capacities are in elements, per PU:
///
/// * `reserved_buf_cap` bounds how many elements a PU carries from one round
///   (patch row) to the next. A patch whose vertical overlap does not fit is
///   refetched from SRAM in full, and so are the PU's later patches in that
///   round.
/// * `neighbor_buf_cap` bounds the elements one patch can receive over the
///   ring; a patch whose horizontal overlap does not fit fetches it instead.
/// * `new_buf_cap` is a sizing check only: patches that need more freshly
///   fetched elements are counted in `Im2ColStats::new_buffer_overflows`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Im2ColConfig {
    pub pu_count: usize,
    #[serde(with = "capacity")]
    pub new_buf_cap: usize,
    #[serde(with = "capacity")]
    pub neighbor_buf_cap: usize,
    #[serde(with = "capacity")]
    pub reserved_buf_cap: usize,
    /// Elements per cycle delivered by the input controller.
    pub sram_bandwidth: usize,
    /// Elements per cycle per ring link.
    pub ring_bandwidth: usize,
    /// Forward horizontal overlap between ring-adjacent PUs.
    pub ring_forwarding: bool,
    /// Skip the PUs for layers whose stride covers the kernel.
    pub auto_bypass: bool,
}

impl Default for Im2ColConfig {
    fn default() -> Self {
        Im2ColConfig {
            pu_count: 4,
            new_buf_cap: UNBOUNDED,
            neighbor_buf_cap: UNBOUNDED,
            reserved_buf_cap: 8192,
            sram_bandwidth: 4,
            ring_bandwidth: 1,
            ring_forwarding: true,
            auto_bypass: true,
        }
    }
}

impl Im2ColConfig {
    /// The reference point for reuse comparisons: no ring forwarding and no
    /// reserved buffer, so every non-padding element comes from SRAM.
    pub fn without_reuse(&self) -> Self {
        Im2ColConfig {
            ring_forwarding: false,
            reserved_buf_cap: 0,
            ..self.clone()
        }
    }

    pub fn with_reserved_cap(mut self, cap: usize) -> Self {
        self.reserved_buf_cap = cap;
        self
    }

    pub fn with_pu_count(mut self, n: usize) -> Self {
        self.pu_count = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.pu_count == 0 {
            return Err(Error::InvalidConfig("im2col pu_count must be >= 1".into()));
        }
        if self.sram_bandwidth == 0 || self.ring_bandwidth == 0 {
            return Err(Error::InvalidConfig(
                "im2col sram_bandwidth and ring_bandwidth must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Buffer capacities in config files: an element count or `"unbounded"`.
pub(crate) mod capacity {
    use serde::{de, Deserialize, Deserializer, Serializer};

    use super::UNBOUNDED;

    pub fn serialize<S: Serializer>(v: &usize, s: S) -> Result<S::Ok, S::Error> {
        if *v == UNBOUNDED {
            s.serialize_str("unbounded")
        } else {
            s.serialize_u64(*v as u64)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Count(u64),
        Word(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Count(n) => usize::try_from(n).map_err(de::Error::custom),
            Raw::Word(w) if w == "unbounded" => Ok(UNBOUNDED),
            Raw::Word(w) => Err(de::Error::custom(format!(
                "expected a count or \"unbounded\", got {w:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(serde::Serialize, serde::Deserialize)]
    struct Wrap {
        im2col: Im2ColConfig,
    }

    #[test]
    fn unbounded_round_trips_through_toml() {
        let text = toml::to_string(&Wrap {
            im2col: Im2ColConfig::default(),
        })
        .unwrap();
        assert!(text.contains("new_buf_cap = \"unbounded\""));
        let back: Wrap = toml::from_str(&text).unwrap();
        assert_eq!(back.im2col, Im2ColConfig::default());
    }

    #[test]
    fn counts_and_words() {
        let w: Wrap = toml::from_str("[im2col]\nreserved_buf_cap = 12\nneighbor_buf_cap = \"unbounded\"\n").unwrap();
        assert_eq!(w.im2col.reserved_buf_cap, 12);
        assert_eq!(w.im2col.neighbor_buf_cap, UNBOUNDED);
        assert!(toml::from_str::<Wrap>("[im2col]\nreserved_buf_cap = \"lots\"\n").is_err());
    }
}
