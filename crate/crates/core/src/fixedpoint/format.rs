use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signed two's-complement fixed-point format: `word_bits` total bits of
/// which `frac_bits` are fractional.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedPointFormat {
    pub word_bits: u32,
    pub frac_bits: u32,
}

impl FixedPointFormat {
    pub fn new(word_bits: u32, frac_bits: u32) -> Result<Self> {
        if !(2..=32).contains(&word_bits) {
            return Err(Error::Config {
                field: "word_bits".into(),
                reason: format!("must lie in 2..=32, got {word_bits}"),
            });
        }
        if frac_bits >= word_bits {
            return Err(Error::Config {
                field: "frac_bits".into(),
                reason: format!("must be below word_bits {word_bits}, got {frac_bits}"),
            });
        }
        Ok(FixedPointFormat { word_bits, frac_bits })
    }

    /// Finest format of `word_bits` that still holds `max_abs` without
    /// saturating.
    pub fn fit(word_bits: u32, max_abs: f64) -> Result<Self> {
        let mut fmt = FixedPointFormat::new(word_bits, word_bits - 1)?;
        while fmt.frac_bits > 0 && fmt.quantize(max_abs).1 {
            fmt.frac_bits -= 1;
        }
        while fmt.frac_bits > 0 && fmt.quantize(-max_abs).1 {
            fmt.frac_bits -= 1;
        }
        Ok(fmt)
    }

    pub fn max_raw(&self) -> i64 {
        (1i64 << (self.word_bits - 1)) - 1
    }

    pub fn min_raw(&self) -> i64 {
        -(1i64 << (self.word_bits - 1))
    }

    pub fn lsb(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn max_value(&self) -> f64 {
        self.to_f64(self.max_raw())
    }

    pub fn min_value(&self) -> f64 {
        self.to_f64(self.min_raw())
    }

    /// Clamp a raw value into the word; the flag reports clipping.
    pub fn saturate(&self, raw: i64) -> (i64, bool) {
        if raw > self.max_raw() {
            (self.max_raw(), true)
        } else if raw < self.min_raw() {
            (self.min_raw(), true)
        } else {
            (raw, false)
        }
    }

    /// Round half away from zero, then saturate.
    pub fn quantize(&self, v: f64) -> (i64, bool) {
        let scaled = v * (self.frac_bits as f64).exp2();
        // f64::round rounds half away from zero
        let r = scaled.round();
        if r >= i64::MAX as f64 {
            return (self.max_raw(), true);
        }
        if r <= i64::MIN as f64 {
            return (self.min_raw(), true);
        }
        self.saturate(r as i64)
    }

    pub fn to_f64(&self, raw: i64) -> f64 {
        raw as f64 * self.lsb()
    }

    /// Nearest representable value.
    pub fn round_trip(&self, v: f64) -> f64 {
        self.to_f64(self.quantize(v).0)
    }

    /// Truncating requantization of a raw value from `self` into `to`:
    /// an arithmetic shift (floor) followed by saturation.
    pub fn truncate_into(&self, raw: i64, to: &FixedPointFormat) -> (i64, bool) {
        let shifted = if self.frac_bits >= to.frac_bits {
            raw >> (self.frac_bits - to.frac_bits)
        } else {
            raw << (to.frac_bits - self.frac_bits)
        };
        to.saturate(shifted)
    }
}

impl std::fmt::Display for FixedPointFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Q{}.{}", self.word_bits, self.frac_bits)
    }
}

/// Signed width (including the sign bit) needed to hold `v`.
pub fn signed_width(v: i64) -> u32 {
    let magnitude = if v < 0 { !v } else { v };
    65 - magnitude.leading_zeros()
}
