use serde::{Deserialize, Serialize};

use super::alu::Alu;
use crate::error::{domain, Result};

/// One signed power-of-two term `±2^exponent`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftTerm {
    pub negative: bool,
    pub exponent: i32,
}

/// A constant written as a short sum of signed powers of two, so that
/// multiplying by it costs only shifts and additions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftAdd {
    pub terms: Vec<ShiftTerm>,
}

impl ShiftAdd {
    /// Greedy signed-digit expansion of `c`: each step takes the power of two
    /// nearest to the remaining error. Stops after `max_terms` terms or once
    /// the error drops below `2^min_exponent`.
    pub fn approximate(c: f64, max_terms: usize, min_exponent: i32) -> Result<ShiftAdd> {
        if !c.is_finite() {
            return domain(format!("cannot expand non-finite constant {c}"));
        }
        let mut terms = Vec::new();
        let mut rest = c;
        while terms.len() < max_terms && rest.abs() >= (min_exponent as f64).exp2() {
            let exponent = rest.abs().log2().round() as i32;
            if exponent < min_exponent {
                break;
            }
            let negative = rest < 0.0;
            let p = (exponent as f64).exp2();
            rest += if negative { p } else { -p };
            terms.push(ShiftTerm { negative, exponent });
        }
        Ok(ShiftAdd { terms })
    }

    pub fn value(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let p = (t.exponent as f64).exp2();
                if t.negative {
                    -p
                } else {
                    p
                }
            })
            .sum()
    }

    /// `d · value · 2^guard` using shifts and wide adds/subs; negative net
    /// exponents shift right (floor).
    pub fn apply(&self, alu: &mut Alu<'_>, d: i64, guard: u32) -> i64 {
        let mut acc = 0i64;
        for t in &self.terms {
            let e = t.exponent + guard as i32;
            let shifted = if e >= 0 {
                alu.shl_wide(d, e as u32)
            } else {
                alu.shr(d, (-e) as u32)
            };
            acc = if t.negative {
                alu.sub_wide(acc, shifted)
            } else {
                alu.add_wide(acc, shifted)
            };
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::trace::OpTrace;
    use crate::fixedpoint::Overflow;

    #[test]
    fn exact_for_short_constants() {
        let s = ShiftAdd::approximate(0.75, 8, -20).unwrap();
        assert_eq!(s.value(), 0.75);
        assert_eq!(s.terms.len(), 2);
        let s = ShiftAdd::approximate(7.0, 8, -20).unwrap();
        assert_eq!(s.terms.len(), 2); // 8 − 1
    }

    #[test]
    fn relative_error_shrinks_with_terms() {
        for c in [0.013, 0.37, 1.9, 123.4, 4096.7] {
            let s = ShiftAdd::approximate(c, 6, -40).unwrap();
            assert!(((s.value() - c) / c).abs() < 2f64.powi(-10), "{c}");
        }
    }

    #[test]
    fn apply_matches_product() {
        let s = ShiftAdd::approximate(0.3, 10, -30).unwrap();
        let mut t = OpTrace::new();
        let mut alu = Alu::new(&mut t, Overflow::Saturate);
        let got = s.apply(&mut alu, 1000, 8) as f64 / 256.0;
        assert!((got - 1000.0 * s.value()).abs() < 0.05);
        assert_eq!(t.multiplies(), 0);
    }
}
