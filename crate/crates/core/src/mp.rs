//! Margin propagation (MP).
//!
//! `MP(v, γ)` is the unique level `z` at which the mass of `v` above `z`
//! equals `γ`:
//!
//! ```text
//! Σᵢ max(vᵢ − z, 0) = γ
//! ```
//!
//! The residual `Σᵢ max(vᵢ − z, 0) − γ` is convex, piecewise linear and
//! strictly decreasing wherever at least one value is above `z`, so the
//! level is found either in closed form once the support is known
//! ([`mp_exact`]) or by a shift-only iteration ([`mp_hw`]).

use crate::error::{domain, Result};

/// Default iteration budget of [`mp_hw`].
pub const DEFAULT_HW_ITERS: usize = 16;

/// Operands of one MP evaluation.
#[derive(Clone, Copy, Debug)]
pub struct MpInput<'a> {
    values: &'a [f64],
    gamma: f64,
}

impl<'a> MpInput<'a> {
    pub fn new(values: &'a [f64], gamma: f64) -> Result<Self> {
        if values.is_empty() {
            return domain("MP needs at least one value");
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return domain(format!("MP margin must be finite and >= 0, got {gamma}"));
        }
        Ok(MpInput { values, gamma })
    }

    pub fn values(&self) -> &'a [f64] {
        self.values
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Signed vector carried on a positive and a negative rail, `v = plus − minus`.
#[derive(Clone, Debug, PartialEq)]
pub struct DifferentialVector {
    plus: Vec<f64>,
    minus: Vec<f64>,
}

impl DifferentialVector {
    pub fn new(plus: Vec<f64>, minus: Vec<f64>) -> Result<Self> {
        if plus.len() != minus.len() {
            return domain(format!(
                "rail length mismatch: {} vs {}",
                plus.len(),
                minus.len()
            ));
        }
        Ok(DifferentialVector { plus, minus })
    }

    /// Rails `plus = v`, `minus = −v`.
    pub fn encode(v: &[f64]) -> Self {
        DifferentialVector {
            plus: v.to_vec(),
            minus: v.iter().map(|x| -x).collect(),
        }
    }

    /// Reconstructs the encoded signed vector. With [`encode`](Self::encode)'s
    /// rails the result is `2v`; rails built elsewhere decode to `plus − minus`.
    pub fn decode(&self) -> Vec<f64> {
        self.plus
            .iter()
            .zip(&self.minus)
            .map(|(p, m)| p - m)
            .collect()
    }

    pub fn plus(&self) -> &[f64] {
        &self.plus
    }

    pub fn minus(&self) -> &[f64] {
        &self.minus
    }

    pub fn len(&self) -> usize {
        self.plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plus.is_empty()
    }
}

/// Partial derivatives of the MP level with respect to each value.
#[derive(Clone, Debug, PartialEq)]
pub struct MpGradient {
    pub partials: Vec<f64>,
    pub support_size: usize,
}

/// Closed-form MP level. `gamma = 0` yields `max(values)`.
pub fn mp_exact(input: &MpInput<'_>) -> f64 {
    let mut scratch = Vec::with_capacity(input.values.len());
    water_level(input.values, input.gamma, &mut scratch)
}

/// Convenience wrapper validating the operands and returning [`mp_exact`].
pub fn mp(values: &[f64], gamma: f64) -> Result<f64> {
    Ok(mp_exact(&MpInput::new(values, gamma)?))
}

/// Sort-and-walk solver shared by every float MP evaluation. `scratch` is
/// reused between calls to avoid allocating in filter loops.
pub(crate) fn water_level(values: &[f64], gamma: f64, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend_from_slice(values);
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    if gamma == 0.0 {
        return scratch[0];
    }
    let mut sum = 0.0;
    for k in 0..scratch.len() {
        sum += scratch[k];
        let z = (sum - gamma) / (k + 1) as f64;
        // the piece with k+1 values in support is valid once z clears the next value
        match scratch.get(k + 1) {
            Some(&next) if z < next => continue,
            _ => return z,
        }
    }
    unreachable!("the last piece always terminates the walk")
}

/// Shift count `s` with `2^s >= count`, found by comparisons only.
pub(crate) fn shift_for_count(count: usize) -> u32 {
    let mut s = 0u32;
    while (1usize << s) < count {
        s += 1;
    }
    s
}

/// Iterative MP solver restricted to add/sub, compare and shift.
///
/// Starts at `max(values) − γ`, where the residual is non-negative, and
/// raises the level by `residual >> s` with `2^s` the smallest power of two
/// covering the current support. The step never overshoots the root because
/// the residual is convex, so the residual decreases monotonically to zero.
pub fn mp_hw(input: &MpInput<'_>, iters: usize) -> Result<f64> {
    Ok(*mp_hw_levels(input, iters)?.last().expect("at least the initial level"))
}

/// Every level visited by [`mp_hw`], starting with the initial guess.
pub fn mp_hw_levels(input: &MpInput<'_>, iters: usize) -> Result<Vec<f64>> {
    if iters == 0 {
        return domain("mp_hw needs at least one iteration");
    }
    let gamma = input.gamma;
    let top = input
        .values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut z = top - gamma;
    let mut levels = vec![z];
    for _ in 0..iters {
        let (mass, count) = mass_above(input.values, z);
        let residual = mass - gamma;
        if residual <= 0.0 {
            break;
        }
        // power-of-two scaling is an exponent shift
        z += residual * (-(shift_for_count(count) as f64)).exp2();
        levels.push(z);
    }
    Ok(levels)
}

fn mass_above(values: &[f64], z: f64) -> (f64, usize) {
    values
        .iter()
        .filter(|&&v| v > z)
        .fold((0.0, 0), |(m, c), &v| (m + (v - z), c + 1))
}

/// Residual `Σ max(vᵢ − z, 0) − γ` of a candidate level.
pub fn residual(values: &[f64], gamma: f64, z: f64) -> f64 {
    mass_above(values, z).0 - gamma
}

/// Gradient of the MP level. Values strictly above the level share the unit
/// sensitivity equally; the rest have zero partials.
pub fn mp_gradient(input: &MpInput<'_>) -> Result<MpGradient> {
    if input.gamma == 0.0 {
        return domain("MP gradient is undefined for gamma = 0");
    }
    let z = mp_exact(input);
    Ok(gradient_at(input.values, z))
}

pub(crate) fn gradient_at(values: &[f64], z: f64) -> MpGradient {
    let support_size = values.iter().filter(|&&v| v > z).count();
    let share = if support_size > 0 {
        1.0 / support_size as f64
    } else {
        0.0
    };
    MpGradient {
        partials: values
            .iter()
            .map(|&v| if v > z { share } else { 0.0 })
            .collect(),
        support_size,
    }
}

/// MP approximation of the inner product `⟨h, x⟩`:
///
/// ```text
/// y = MP([h⁺+x⁺ ‖ h⁻+x⁻], γ) − MP([h⁺+x⁻ ‖ h⁻+x⁺], γ)
/// ```
pub fn mp_inner_product(
    h: &DifferentialVector,
    x: &DifferentialVector,
    gamma_f: f64,
) -> Result<f64> {
    if h.len() != x.len() {
        return domain(format!(
            "inner product length mismatch: {} vs {}",
            h.len(),
            x.len()
        ));
    }
    if h.is_empty() {
        return domain("inner product of empty vectors");
    }
    if !(gamma_f > 0.0) {
        return domain(format!("gamma_f must be > 0, got {gamma_f}"));
    }
    let mut ws = MpWorkspace::default();
    Ok(ws.inner_product(h.plus(), h.minus(), x.plus(), x.minus(), gamma_f))
}

/// Reusable buffers for repeated inner products in filter loops.
#[derive(Default, Debug)]
pub(crate) struct MpWorkspace {
    same: Vec<f64>,
    cross: Vec<f64>,
    sort: Vec<f64>,
}

impl MpWorkspace {
    pub(crate) fn inner_product(
        &mut self,
        h_plus: &[f64],
        h_minus: &[f64],
        x_plus: &[f64],
        x_minus: &[f64],
        gamma: f64,
    ) -> f64 {
        self.same.clear();
        self.cross.clear();
        self.same
            .extend(h_plus.iter().zip(x_plus).map(|(h, x)| h + x));
        self.same
            .extend(h_minus.iter().zip(x_minus).map(|(h, x)| h + x));
        self.cross
            .extend(h_plus.iter().zip(x_minus).map(|(h, x)| h + x));
        self.cross
            .extend(h_minus.iter().zip(x_plus).map(|(h, x)| h + x));
        water_level(&self.same, gamma, &mut self.sort) - water_level(&self.cross, gamma, &mut self.sort)
    }
}
