//! Fixed-point helpers. Operands are 16-bit signed integers; products and
//! sums are carried exactly in `i64` and checked against the configured
//! accumulator width.

use serde::{Deserialize, Serialize};

/// Width of the PE accumulator register.
///
/// Accumulation is always exact; the width only decides what counts as an
/// overflow event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum AccWidth {
    #[default]
    #[serde(rename = "32")]
    Bits32,
    #[serde(rename = "24")]
    Bits24,
}

impl AccWidth {
    pub fn bits(self) -> u32 {
        match self {
            AccWidth::Bits32 => 32,
            AccWidth::Bits24 => 24,
        }
    }

    pub fn min(self) -> i64 {
        -(1i64 << (self.bits() - 1))
    }

    pub fn max(self) -> i64 {
        (1i64 << (self.bits() - 1)) - 1
    }

    #[inline]
    pub fn fits(self, v: i64) -> bool {
        v >= self.min() && v <= self.max()
    }
}

#[inline]
pub fn saturate_i16(v: i64) -> i16 {
    v.clamp(i16::MIN as i64, i16::MAX as i64) as i16
}

/// Arithmetic right shift followed by 16-bit saturation.
#[inline]
pub fn requantize(v: i64, shift: u32) -> i16 {
    saturate_i16(v >> shift.min(63))
}

/// Applies bias, optional ReLU and requantization to one accumulator value.
#[inline]
pub fn finish_value(acc: i64, bias: Option<i16>, relu: bool, shift: u32) -> i16 {
    let mut v = acc + bias.map_or(0, i64::from);
    if relu && v < 0 {
        v = 0;
    }
    requantize(v, shift)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths() {
        assert_eq!(AccWidth::Bits24.max(), 8_388_607);
        assert_eq!(AccWidth::Bits24.min(), -8_388_608);
        assert!(AccWidth::Bits32.fits(i32::MAX as i64));
        assert!(!AccWidth::Bits32.fits(i32::MAX as i64 + 1));
    }

    #[test]
    fn requantize_shifts_then_saturates() {
        assert_eq!(requantize(5, 0), 5);
        assert_eq!(requantize(40_000, 0), i16::MAX);
        assert_eq!(requantize(-40_000, 0), i16::MIN);
        assert_eq!(requantize(40_000, 1), 20_000);
        assert_eq!(requantize(-3, 1), -2);
    }

    #[test]
    fn relu_before_shift() {
        assert_eq!(finish_value(-10, None, true, 0), 0);
        assert_eq!(finish_value(-10, Some(20), true, 1), 5);
        assert_eq!(finish_value(-10, None, false, 0), -10);
    }
}
