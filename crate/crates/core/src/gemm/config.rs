use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AccWidth;

/// Systolic array geometry. `split_factor = 1` is one tall M x N array;
/// `k > 1` splits it into k sub-arrays of M/k rows, each fed by its own
/// Im2Col unit while the weights are broadcast to all of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArrayConfig {
    pub rows: usize,
    pub cols: usize,
    /// Accumulator registers per PE, i.e. filter rows one PE row can hold.
    pub regs_per_pe: usize,
    pub split_factor: usize,
    /// Upper bound on weight passes per layer.
    pub max_passes: usize,
    pub acc_width: AccWidth,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig {
            rows: 128,
            cols: 4,
            regs_per_pe: 4,
            split_factor: 1,
            max_passes: 64,
            acc_width: AccWidth::Bits32,
        }
    }
}

impl ArrayConfig {
    pub fn with_split(mut self, k: usize) -> Self {
        self.split_factor = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.regs_per_pe == 0 || self.max_passes == 0 {
            return Err(Error::InvalidConfig(
                "array rows, cols, regs_per_pe and max_passes must be >= 1".into(),
            ));
        }
        if ![1, 2, 4].contains(&self.split_factor) {
            return Err(Error::InvalidConfig(format!(
                "split factor must be 1, 2 or 4, got {}",
                self.split_factor
            )));
        }
        if !self.rows.is_multiple_of(self.split_factor) {
            return Err(Error::InvalidConfig(format!(
                "{} rows do not divide into {} sub-arrays",
                self.rows, self.split_factor
            )));
        }
        Ok(())
    }

    pub fn sub_rows(&self) -> usize {
        self.rows / self.split_factor.max(1)
    }

    pub fn pe_count(&self) -> usize {
        self.rows * self.cols
    }
}

/// Filters handled in one pass over the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassPlan {
    pub filters: Range<usize>,
    /// Filter rows multiplexed onto each PE row (r in the cycle formula).
    pub rows_per_pe: usize,
    /// PE rows holding at least one filter.
    pub active_rows: usize,
}

/// Where filters and output columns land on the array.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub split_factor: usize,
    pub sub_rows: usize,
    pub passes: Vec<PassPlan>,
    /// Fraction of PE rows of each (sub-)array holding a filter:
    /// `min(F, M/k) / (M/k)`.
    pub row_occupancy: f64,
}

impl Placement {
    /// `(pass, pe_row, register_slot)` of filter `f`.
    pub fn locate(&self, f: usize) -> (usize, usize, usize) {
        let pass = self
            .passes
            .iter()
            .position(|p| p.filters.contains(&f))
            .expect("filter outside the placed range");
        let local = f - self.passes[pass].filters.start;
        (pass, local % self.sub_rows, local / self.sub_rows)
    }

    /// Output columns computed by sub-array `i` out of `total`.
    pub fn column_range(&self, i: usize, total: usize) -> Range<usize> {
        let k = self.split_factor;
        i * total / k..(i + 1) * total / k
    }
}

/// Maps F filters onto the array: filter `f` goes to PE row `f mod M'` and
/// register slot `f div M'` (M' = rows per sub-array), `M' * Kr` filters per
/// pass.
pub fn configure(cfg: &ArrayConfig, filters: usize) -> Result<Placement> {
    cfg.validate()?;
    if filters == 0 {
        return Err(Error::InvalidConfig("cannot place zero filters".into()));
    }
    let sub_rows = cfg.sub_rows();
    let per_pass = sub_rows * cfg.regs_per_pe;
    let passes_needed = filters.div_ceil(per_pass);
    if passes_needed > cfg.max_passes {
        return Err(Error::InvalidConfig(format!(
            "{filters} filters need {passes_needed} passes of {per_pass}, limit is {}",
            cfg.max_passes
        )));
    }
    let passes = (0..passes_needed)
        .map(|j| {
            let filters = j * per_pass..((j + 1) * per_pass).min(filters);
            let n = filters.len();
            PassPlan {
                filters,
                rows_per_pe: n.div_ceil(sub_rows),
                active_rows: n.min(sub_rows),
            }
        })
        .collect();
    Ok(Placement {
        split_factor: cfg.split_factor,
        sub_rows,
        passes,
        row_occupancy: filters.min(sub_rows) as f64 / sub_rows as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tall_full() {
        let p = configure(&ArrayConfig::default(), 128).unwrap();
        assert_eq!(p.row_occupancy, 1.0);
        assert_eq!(p.passes.len(), 1);
        assert_eq!(p.passes[0].rows_per_pe, 1);
    }

    #[test]
    fn half_filled_tall_vs_split() {
        let p = configure(&ArrayConfig::default(), 64).unwrap();
        assert_eq!(p.row_occupancy, 0.5);
        let p = configure(&ArrayConfig::default().with_split(2), 64).unwrap();
        assert_eq!(p.row_occupancy, 1.0);
    }

    #[test]
    fn four_per_pe_row() {
        let p = configure(&ArrayConfig::default(), 512).unwrap();
        assert_eq!(p.passes.len(), 1);
        assert_eq!(p.passes[0].rows_per_pe, 4);
        assert_eq!(p.locate(0), (0, 0, 0));
        assert_eq!(p.locate(129), (0, 1, 1));
        assert_eq!(p.locate(511), (0, 127, 3));
    }

    #[test]
    fn multiple_passes() {
        let p = configure(&ArrayConfig::default(), 600).unwrap();
        assert_eq!(p.passes.len(), 2);
        assert_eq!(p.passes[1].filters, 512..600);
        assert_eq!(p.passes[1].active_rows, 88);
        assert_eq!(p.locate(520), (1, 8, 0));
    }

    #[test]
    fn pass_limit() {
        let cfg = ArrayConfig {
            max_passes: 1,
            ..ArrayConfig::default()
        };
        assert!(configure(&cfg, 513).is_err());
    }

    #[test]
    fn split_column_ranges() {
        let p = configure(&ArrayConfig::default().with_split(2), 8).unwrap();
        assert_eq!(p.column_range(0, 10), 0..5);
        assert_eq!(p.column_range(1, 10), 5..10);
        let p = configure(&ArrayConfig::default().with_split(4), 8).unwrap();
        let total: usize = (0..4).map(|i| p.column_range(i, 7).len()).sum();
        assert_eq!(total, 7);
    }

    #[test]
    fn rejects_bad_split() {
        assert!(ArrayConfig::default().with_split(3).validate().is_err());
    }
}
