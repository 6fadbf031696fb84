use serde::{Deserialize, Serialize};

use super::format::{signed_width, FixedPointFormat};
use super::trace::{OpTrace, Stage};
use crate::error::{domain, Result};

/// Behaviour of a narrow register on overflow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overflow {
    #[default]
    Saturate,
    Wrap,
}

/// Integer datapath restricted to add, subtract, compare and constant
/// shifts. Every operation is charged to the current stage of the trace.
/// Operations suffixed `_wide` model the accumulator register, which is not
/// clipped but whose peak width is recorded.
pub struct Alu<'t> {
    trace: &'t mut OpTrace,
    stage: Stage,
    overflow: Overflow,
}

impl<'t> Alu<'t> {
    pub fn new(trace: &'t mut OpTrace, overflow: Overflow) -> Self {
        Alu {
            trace,
            stage: Stage::Input,
            overflow,
        }
    }

    pub fn set_stage(&mut self, stage: Stage) {
        self.stage = stage;
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn trace_mut(&mut self) -> &mut OpTrace {
        self.trace
    }

    fn note_width(&mut self, v: i64) {
        let w = signed_width(v);
        let s = self.trace.stage_mut(self.stage);
        if w > s.max_width_bits {
            s.max_width_bits = w;
        }
    }

    /// Fit `v` into `fmt` per the overflow policy.
    pub fn narrow(&mut self, v: i64, fmt: &FixedPointFormat) -> i64 {
        let (r, clipped) = match self.overflow {
            Overflow::Saturate => fmt.saturate(v),
            Overflow::Wrap => {
                let shift = 64 - fmt.word_bits;
                let r = (v << shift) >> shift;
                (r, r != v)
            }
        };
        if clipped {
            self.trace.stage_mut(self.stage).saturations += 1;
        }
        self.note_width(r);
        r
    }

    pub fn add(&mut self, a: i64, b: i64, fmt: &FixedPointFormat) -> i64 {
        self.trace.stage_mut(self.stage).counts.add += 1;
        self.narrow(a + b, fmt)
    }

    pub fn sub(&mut self, a: i64, b: i64, fmt: &FixedPointFormat) -> i64 {
        self.trace.stage_mut(self.stage).counts.sub += 1;
        self.narrow(a - b, fmt)
    }

    pub fn add_wide(&mut self, a: i64, b: i64) -> i64 {
        self.trace.stage_mut(self.stage).counts.add += 1;
        let r = a + b;
        self.note_width(r);
        r
    }

    pub fn sub_wide(&mut self, a: i64, b: i64) -> i64 {
        self.trace.stage_mut(self.stage).counts.sub += 1;
        let r = a - b;
        self.note_width(r);
        r
    }

    /// `a > b`.
    pub fn gt(&mut self, a: i64, b: i64) -> bool {
        self.trace.stage_mut(self.stage).counts.compare += 1;
        a > b
    }

    /// Arithmetic right shift (floor division by `2^k`).
    pub fn shr(&mut self, a: i64, k: u32) -> i64 {
        self.trace.stage_mut(self.stage).counts.shift += 1;
        a >> k
    }

    pub fn shl_wide(&mut self, a: i64, k: u32) -> i64 {
        self.trace.stage_mut(self.stage).counts.shift += 1;
        let r = a << k;
        self.note_width(r);
        r
    }

    /// `max(a, 0)` as a single compare.
    pub fn relu(&mut self, a: i64) -> i64 {
        if self.gt(a, 0) {
            a
        } else {
            0
        }
    }

    /// Hardware multiply. Only the reference MAC path may call this; the
    /// audit rejects any trace in which it appears.
    pub fn mul_wide(&mut self, a: i64, b: i64) -> i64 {
        self.trace.stage_mut(self.stage).counts.multiply += 1;
        let r = a * b;
        self.note_width(r);
        r
    }
}

/// Saturating fixed-point addition.
pub fn fx_add(a: i64, b: i64, fmt: &FixedPointFormat, trace: &mut OpTrace) -> (i64, bool) {
    let before = trace.stage(Stage::Input).saturations;
    let r = Alu::new(trace, Overflow::Saturate).add(a, b, fmt);
    (r, trace.stage(Stage::Input).saturations > before)
}

/// Saturating fixed-point subtraction.
pub fn fx_sub(a: i64, b: i64, fmt: &FixedPointFormat, trace: &mut OpTrace) -> (i64, bool) {
    let before = trace.stage(Stage::Input).saturations;
    let r = Alu::new(trace, Overflow::Saturate).sub(a, b, fmt);
    (r, trace.stage(Stage::Input).saturations > before)
}

/// Reverse water-filling on raw integers: the level `z` (in the operands'
/// format) with `Σ [v − z]₊ ≈ γ`. Starts at `max − γ` and repeatedly raises
/// `z` by the residual shifted right by `ceil(log2(support))`; stops when the
/// residual is no longer positive, the step truncates to zero, or after
/// `iters` updates. The result floors the true level to within one LSB.
pub fn fx_mp(
    alu: &mut Alu<'_>,
    values: &[i64],
    gamma: i64,
    fmt: &FixedPointFormat,
    iters: usize,
) -> Result<i64> {
    let z = water_level_wide(alu, values, gamma, iters)?;
    Ok(alu.narrow(z, fmt))
}

/// Water level held in the wide register, without narrowing.
pub fn water_level_wide(alu: &mut Alu<'_>, values: &[i64], gamma: i64, iters: usize) -> Result<i64> {
    if values.is_empty() {
        return domain("MP needs at least one value");
    }
    if gamma < 0 {
        return domain(format!("MP margin must be >= 0, got raw {gamma}"));
    }
    if iters == 0 {
        return domain("MP needs at least one iteration");
    }
    let mut top = values[0];
    for &v in &values[1..] {
        if alu.gt(v, top) {
            top = v;
        }
    }
    let mut z = alu.sub_wide(top, gamma);
    for _ in 0..iters {
        let mut residual = alu.sub_wide(0, gamma);
        let mut count = 0i64;
        for &v in values {
            let d = alu.sub_wide(v, z);
            if alu.gt(d, 0) {
                residual = alu.add_wide(residual, d);
                count = alu.add_wide(count, 1);
            }
        }
        if !alu.gt(residual, 0) {
            break;
        }
        let mut s = 0u32;
        let mut pow = 1i64;
        while alu.gt(count, pow) {
            pow = alu.shl_wide(pow, 1);
            s += 1;
        }
        let step = alu.shr(residual, s);
        if !alu.gt(step, 0) {
            break;
        }
        z = alu.add_wide(z, step);
    }
    Ok(z)
}

/// Reusable buffers for MP inner products on raw integers.
#[derive(Default)]
pub(crate) struct FxWorkspace {
    same: Vec<i64>,
    cross: Vec<i64>,
}

impl FxWorkspace {
    /// `MP([h⁺+x⁺ ‖ h⁻+x⁻]) − MP([h⁺+x⁻ ‖ h⁻+x⁺])`. The sums saturate to
    /// `fmt`; both levels are then resolved with `guard` extra fraction bits
    /// and their difference is returned in that wide format.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn inner_product(
        &mut self,
        alu: &mut Alu<'_>,
        h_plus: &[i64],
        h_minus: &[i64],
        x_plus: &[i64],
        x_minus: &[i64],
        gamma: i64,
        fmt: &FixedPointFormat,
        iters: usize,
        guard: u32,
    ) -> Result<i64> {
        self.same.clear();
        self.cross.clear();
        for (h, x) in h_plus.iter().zip(x_plus) {
            let v = alu.add(*h, *x, fmt);
            self.same.push(v);
        }
        for (h, x) in h_minus.iter().zip(x_minus) {
            let v = alu.add(*h, *x, fmt);
            self.same.push(v);
        }
        for (h, x) in h_plus.iter().zip(x_minus) {
            let v = alu.add(*h, *x, fmt);
            self.cross.push(v);
        }
        for (h, x) in h_minus.iter().zip(x_plus) {
            let v = alu.add(*h, *x, fmt);
            self.cross.push(v);
        }
        if guard > 0 {
            for v in self.same.iter_mut().chain(self.cross.iter_mut()) {
                *v = alu.shl_wide(*v, guard);
            }
        }
        let a = water_level_wide(alu, &self.same, gamma, iters)?;
        let b = water_level_wide(alu, &self.cross, gamma, iters)?;
        Ok(alu.sub_wide(a, b))
    }
}

/// MP-approximated FIR filter on raw samples in `fmt`. `gamma` is given with
/// `guard` extra fraction bits, and so is every output sample.
pub fn fx_fir_mp(
    alu: &mut Alu<'_>,
    x: &[i64],
    h: &[i64],
    gamma: i64,
    fmt: &FixedPointFormat,
    iters: usize,
    guard: u32,
) -> Result<Vec<i64>> {
    if h.is_empty() {
        return domain("FIR needs at least one tap");
    }
    let m = h.len();
    let zero = 0;
    let h_minus: Vec<i64> = h.iter().map(|&v| alu.sub(zero, v, fmt)).collect();
    let mut ws = FxWorkspace::default();
    let mut window = vec![0i64; m];
    let mut window_minus = vec![0i64; m];
    let mut y = Vec::with_capacity(x.len());
    for &sample in x {
        window.rotate_right(1);
        window_minus.rotate_right(1);
        window[0] = sample;
        window_minus[0] = alu.sub(zero, sample, fmt);
        y.push(ws.inner_product(alu, h, &h_minus, &window, &window_minus, gamma, fmt, iters, guard)?);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mp::mp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn q10_4() -> FixedPointFormat {
        FixedPointFormat::new(10, 4).unwrap()
    }

    #[test]
    fn add_sub_examples() {
        let q = q10_4();
        let mut t = OpTrace::new();
        assert_eq!(fx_add(16, 16, &q, &mut t), (32, false));
        assert_eq!(fx_add(q.max_raw(), 1, &q, &mut t), (q.max_raw(), true));
        assert_eq!(fx_sub(q.min_raw(), 1, &q, &mut t), (q.min_raw(), true));
        let s = t.stage(Stage::Input);
        assert_eq!((s.counts.add, s.counts.sub, s.saturations), (2, 1, 2));
    }

    #[test]
    fn add_sub_match_wide_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = FixedPointFormat::new(8, 3).unwrap();
        let mut t = OpTrace::new();
        for _ in 0..2000 {
            let a = rng.gen_range(q.min_raw()..=q.max_raw());
            let b = rng.gen_range(q.min_raw()..=q.max_raw());
            let sum = (a as i128 + b as i128).clamp(q.min_raw() as i128, q.max_raw() as i128);
            let diff = (a as i128 - b as i128).clamp(q.min_raw() as i128, q.max_raw() as i128);
            assert_eq!(fx_add(a, b, &q, &mut t).0 as i128, sum);
            assert_eq!(fx_sub(a, b, &q, &mut t).0 as i128, diff);
        }
    }

    #[test]
    fn wrap_mode_wraps() {
        let q = FixedPointFormat::new(8, 0).unwrap();
        let mut t = OpTrace::new();
        let mut alu = Alu::new(&mut t, Overflow::Wrap);
        assert_eq!(alu.add(127, 1, &q), -128);
        assert_eq!(t.stage(Stage::Input).saturations, 1);
    }

    #[test]
    fn fx_mp_examples() {
        let q = q10_4();
        let mut t = OpTrace::new();
        let mut alu = Alu::new(&mut t, Overflow::Saturate);
        assert_eq!(fx_mp(&mut alu, &[80], 32, &q, 16).unwrap(), 48);
        let z = fx_mp(&mut alu, &[48, 16, 32], 16, &q, 16).unwrap();
        assert!((z - 32).abs() <= 2);
        assert!(fx_mp(&mut alu, &[], 16, &q, 16).is_err());
        assert!(fx_mp(&mut alu, &[1], -1, &q, 16).is_err());
        assert_eq!(t.multiplies(), 0);
    }

    #[test]
    fn fx_mp_within_two_lsb_of_float() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = q10_4();
        let mut t = OpTrace::new();
        let mut alu = Alu::new(&mut t, Overflow::Saturate);
        for _ in 0..3000 {
            let n = rng.gen_range(1..=40);
            let raw: Vec<i64> = (0..n).map(|_| rng.gen_range(-256..256)).collect();
            let gamma = rng.gen_range(1..128);
            let floats: Vec<f64> = raw.iter().map(|&r| q.to_f64(r)).collect();
            let expect = q.quantize(mp(&floats, q.to_f64(gamma)).unwrap()).0;
            let got = fx_mp(&mut alu, &raw, gamma, &q, 16).unwrap();
            assert!((got - expect).abs() <= 2, "{raw:?} {gamma}: {got} vs {expect}");
        }
        assert_eq!(t.multiplies(), 0);
    }

    #[test]
    fn fx_fir_mp_is_antisymmetric() {
        let q = FixedPointFormat::new(10, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h: Vec<i64> = (0..16).map(|_| rng.gen_range(-100..100)).collect();
        let x: Vec<i64> = (0..200).map(|_| rng.gen_range(-60..60)).collect();
        let neg: Vec<i64> = x.iter().map(|v| -v).collect();
        let mut t = OpTrace::new();
        let mut alu = Alu::new(&mut t, Overflow::Saturate);
        let a = fx_fir_mp(&mut alu, &x, &h, 256 << 4, &q, 16, 4).unwrap();
        let b = fx_fir_mp(&mut alu, &neg, &h, 256 << 4, &q, 16, 4).unwrap();
        assert!(a.iter().zip(&b).all(|(u, v)| *u == -v));
        assert_eq!(t.multiplies(), 0);
    }

    #[test]
    fn fx_fir_mp_tracks_float_mp_filter() {
        let q = FixedPointFormat::new(10, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h: Vec<f64> = (0..16).map(|_| rng.gen_range(-0.2..0.2)).collect();
        let x: Vec<f64> = (0..300).map(|_| rng.gen_range(-0.06..0.06)).collect();
        let hq: Vec<i64> = h.iter().map(|&v| q.quantize(v).0).collect();
        let xq: Vec<i64> = x.iter().map(|&v| q.quantize(v).0).collect();
        let hf: Vec<f64> = hq.iter().map(|&r| q.to_f64(r)).collect();
        let xf: Vec<f64> = xq.iter().map(|&r| q.to_f64(r)).collect();
        let expect = crate::filterbank::fir_mp(&xf, &hf, 0.5).unwrap();
        let mut t = OpTrace::new();
        let mut alu = Alu::new(&mut t, Overflow::Saturate);
        let guard = 6;
        let got = fx_fir_mp(&mut alu, &xq, &hq, 256 << guard, &q, 16, guard).unwrap();
        let lsb = q.lsb() / (1 << guard) as f64;
        for (g, e) in got.iter().zip(&expect) {
            assert!((*g as f64 * lsb - e).abs() <= 2.0 * lsb, "{} vs {e}", *g as f64 * lsb);
        }
    }
}
