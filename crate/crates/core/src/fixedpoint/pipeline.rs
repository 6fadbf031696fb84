use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::alu::{fx_fir_mp, fx_mp, Alu, Overflow};
use super::csd::ShiftAdd;
use super::format::FixedPointFormat;
use super::trace::{OpTrace, Stage};
use crate::error::{domain, Error, Result};
use crate::filterbank::SIGMA_FLOOR;
use crate::kernel_machine::{Decision, TrainedModel};

/// Register formats of the integer datapath.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatapathConfig {
    /// Samples, taps and every filter-stage register.
    pub filter: FixedPointFormat,
    /// Width of the energy accumulators. They hold `filter.frac_bits +
    /// mp_guard_bits` fraction bits.
    pub accumulator_bits: u32,
    /// Kernel register fed to the classifier; the standardized energy is
    /// truncated into it.
    pub kernel: FixedPointFormat,
    /// Weights, biases, scores and margins of the classifier.
    pub classifier: FixedPointFormat,
    pub mp_iters: usize,
    /// Extra fraction bits appended to `filter` for the sample streams and
    /// filter outputs after the input shift.
    pub mp_guard_bits: u32,
    /// Extra fraction bits carried through the shift-add standardization.
    pub guard_bits: u32,
    /// Maximum signed power-of-two terms per `1/σ` constant.
    pub reciprocal_terms: usize,
    pub overflow: Overflow,
}

impl Default for DatapathConfig {
    fn default() -> Self {
        DatapathConfig {
            filter: FixedPointFormat {
                word_bits: 10,
                frac_bits: 9,
            },
            accumulator_bits: 32,
            kernel: FixedPointFormat {
                word_bits: 10,
                frac_bits: 5,
            },
            classifier: FixedPointFormat {
                word_bits: 10,
                frac_bits: 5,
            },
            mp_iters: 16,
            mp_guard_bits: 6,
            guard_bits: 8,
            reciprocal_terms: 6,
            overflow: Overflow::Saturate,
        }
    }
}

impl DatapathConfig {
    pub fn validate(&self) -> Result<()> {
        FixedPointFormat::new(self.filter.word_bits, self.filter.frac_bits)?;
        FixedPointFormat::new(self.kernel.word_bits, self.kernel.frac_bits)?;
        FixedPointFormat::new(self.classifier.word_bits, self.classifier.frac_bits)?;
        let config = |field: &str, reason: &str| {
            Err(Error::Config {
                field: field.into(),
                reason: reason.into(),
            })
        };
        if self.mp_guard_bits > 12 {
            return config("mp_guard_bits", "at most 12");
        }
        if self.accumulator_bits <= self.filter.frac_bits + self.mp_guard_bits || self.accumulator_bits > 48 {
            return config("accumulator_bits", "must exceed the filter fraction bits and be <= 48");
        }
        if self.mp_iters == 0 {
            return config("mp_iters", "must be positive");
        }
        if self.guard_bits > 16 {
            return config("guard_bits", "at most 16");
        }
        if self.reciprocal_terms == 0 {
            return config("reciprocal_terms", "must be positive");
        }
        Ok(())
    }

    fn accumulator(&self) -> FixedPointFormat {
        FixedPointFormat {
            word_bits: self.accumulator_bits,
            frac_bits: self.filter.frac_bits + self.mp_guard_bits,
        }
    }

    fn stream(&self) -> FixedPointFormat {
        FixedPointFormat {
            word_bits: self.filter.word_bits + self.mp_guard_bits,
            frac_bits: self.filter.frac_bits + self.mp_guard_bits,
        }
    }
}

/// Raw constants of a quantized model in the datapath formats.
#[derive(Clone, Debug)]
struct Rom {
    bp: Vec<Vec<i64>>,
    lp: Vec<Vec<i64>>,
    gamma_f: i64,
    mu: Vec<i64>,
    reciprocal: Vec<ShiftAdd>,
    w_plus: Vec<i64>,
    w_minus: Vec<i64>,
    b_plus: i64,
    b_minus: i64,
    gamma1: i64,
    gamma_n: i64,
}

fn to_raw(v: f64, fmt: &FixedPointFormat, what: &str) -> i64 {
    let (raw, clipped) = fmt.quantize(v);
    if clipped {
        log::warn!("{what} = {v} saturates in {fmt}");
    }
    raw
}

impl Rom {
    fn build(model: &TrainedModel, cfg: &DatapathConfig) -> Result<Rom> {
        let c = &cfg.classifier;
        let acc = cfg.accumulator();
        let stream = cfg.stream();
        let raw_vec =
            |v: &[f64], fmt: &FixedPointFormat, what: &str| v.iter().map(|&x| to_raw(x, fmt, what)).collect();
        let reciprocal = model
            .stats
            .sigma
            .iter()
            .map(|&s| {
                let s = if s > 0.0 { s } else { SIGMA_FLOOR };
                ShiftAdd::approximate(1.0 / s, cfg.reciprocal_terms, -(acc.frac_bits as i32) - 24)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Rom {
            bp: model.bank.bp_coeffs.iter().map(|h| raw_vec(h, &stream, "band-pass tap")).collect(),
            lp: model.bank.lp_coeffs.iter().map(|h| raw_vec(h, &stream, "low-pass tap")).collect(),
            gamma_f: to_raw(model.gamma_f, &stream, "gamma_f"),
            mu: raw_vec(&model.stats.mu, &acc, "mean"),
            reciprocal,
            w_plus: raw_vec(&model.w_plus, c, "w_plus"),
            w_minus: raw_vec(&model.w_minus, c, "w_minus"),
            b_plus: to_raw(model.b_plus, c, "b_plus"),
            b_minus: to_raw(model.b_minus, c, "b_minus"),
            gamma1: to_raw(model.gamma1, c, "gamma1"),
            gamma_n: to_raw(model.gamma_n, c, "gamma_n"),
        })
    }
}

/// Output of one integer pipeline run.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedRun {
    pub decision: Decision,
    /// Kernel register contents in `DatapathConfig::kernel`.
    pub kernel: Vec<i64>,
    pub z_plus: i64,
    pub z_minus: i64,
    pub trace: OpTrace,
}

/// ADC model: round each sample into the filter format.
pub fn quantize_audio(x: &[f64], fmt: &FixedPointFormat) -> Vec<i64> {
    x.iter().map(|&v| fmt.quantize(v).0).collect()
}

/// Integer pipeline on samples already in `cfg.filter`: input shift, MP
/// decimation chain, MP band-pass filters, rectified accumulation,
/// shift-add standardization, truncation into the kernel register, MP
/// classifier and MP normalization.
pub fn fixed_pipeline(x: &[i64], model: &TrainedModel, cfg: &DatapathConfig) -> Result<FixedRun> {
    model.validate()?;
    cfg.validate()?;
    if model.quant.is_none() {
        return Err(Error::State("fixed pipeline needs a quantized model".into()));
    }
    let rom = Rom::build(model, cfg)?;
    let f = cfg.filter;
    let sf = cfg.stream();
    let iters = cfg.mp_iters;
    let g = cfg.mp_guard_bits;
    let mut trace = OpTrace::new();

    let mut streams: Vec<Vec<i64>> = Vec::with_capacity(model.bank.config.num_octaves);
    {
        let mut alu = Alu::new(&mut trace, cfg.overflow);
        alu.set_stage(Stage::Input);
        let shift = model.bank.config.input_shift;
        let first = x
            .iter()
            .map(|&v| {
                let v = alu.narrow(v, &f);
                let v = if g >= shift { alu.shl_wide(v, g - shift) } else { alu.shr(v, shift - g) };
                alu.narrow(v, &sf)
            })
            .collect();
        streams.push(first);
        alu.set_stage(Stage::Decimation);
        for lp in &rom.lp {
            let y = fx_fir_mp(&mut alu, streams.last().expect("non-empty"), lp, rom.gamma_f, &sf, iters, 0)?;
            let next = y.into_iter().step_by(2).map(|v| alu.narrow(v, &sf)).collect();
            streams.push(next);
        }
    }

    let per_filter: Vec<(i64, OpTrace)> = rom
        .bp
        .par_iter()
        .zip(model.bank.octave_of.par_iter())
        .map(|(h, &o)| {
            let mut t = OpTrace::new();
            let mut alu = Alu::new(&mut t, cfg.overflow);
            alu.set_stage(Stage::BandPass);
            let y = fx_fir_mp(&mut alu, &streams[o], h, rom.gamma_f, &sf, iters, 0)?;
            let y: Vec<i64> = y.into_iter().map(|v| alu.narrow(v, &sf)).collect();
            alu.set_stage(Stage::Accumulate);
            let mut s = 0i64;
            for v in y {
                let r = alu.relu(v);
                s = alu.add_wide(s, r);
            }
            Ok((s, t))
        })
        .collect::<Result<_>>()?;

    let mut alu = Alu::new(&mut trace, cfg.overflow);
    let mut energies = Vec::with_capacity(per_filter.len());
    for (s, t) in &per_filter {
        energies.push(*s);
        alu.trace_mut().merge(t);
    }
    let acc = cfg.accumulator();
    alu.set_stage(Stage::Accumulate);
    for s in &mut energies {
        *s = alu.narrow(*s, &acc);
    }

    alu.set_stage(Stage::Standardize);
    let drop = acc.frac_bits + cfg.guard_bits;
    if drop < cfg.kernel.frac_bits {
        return domain("kernel register finer than the standardized value");
    }
    let kernel: Vec<i64> = energies
        .iter()
        .zip(&rom.mu)
        .zip(&rom.reciprocal)
        .map(|((&s, &mu), r)| {
            let d = alu.sub_wide(s, mu);
            let scaled = r.apply(&mut alu, d, cfg.guard_bits);
            let top = alu.shr(scaled, drop - cfg.kernel.frac_bits);
            alu.narrow(top, &cfg.kernel)
        })
        .collect();

    alu.set_stage(Stage::Classifier);
    let c = cfg.classifier;
    let phi: Vec<i64> = kernel
        .iter()
        .map(|&k| {
            let (v, _) = cfg.kernel.truncate_into(k, &c);
            v
        })
        .collect();
    let mut plus = Vec::with_capacity(2 * phi.len() + 1);
    let mut minus = Vec::with_capacity(2 * phi.len() + 1);
    for (w, k) in rom.w_plus.iter().zip(&phi) {
        plus.push(alu.add(*w, *k, &c));
    }
    for (w, k) in rom.w_minus.iter().zip(&phi) {
        plus.push(alu.sub(*w, *k, &c));
    }
    plus.push(rom.b_plus);
    for (w, k) in rom.w_plus.iter().zip(&phi) {
        minus.push(alu.sub(*w, *k, &c));
    }
    for (w, k) in rom.w_minus.iter().zip(&phi) {
        minus.push(alu.add(*w, *k, &c));
    }
    minus.push(rom.b_minus);
    let z_plus = fx_mp(&mut alu, &plus, rom.gamma1, &c, iters)?;
    let z_minus = fx_mp(&mut alu, &minus, rom.gamma1, &c, iters)?;

    alu.set_stage(Stage::Normalize);
    let z = fx_mp(&mut alu, &[z_plus, z_minus], rom.gamma_n, &c, iters)?;
    let d_plus = alu.sub(z_plus, z, &c);
    let p_plus = alu.relu(d_plus);
    let d_minus = alu.sub(z_minus, z, &c);
    let p_minus = alu.relu(d_minus);
    let p = alu.sub(p_plus, p_minus, &c);
    let label = alu.gt(p, 0);

    let decision = Decision {
        p: c.to_f64(p),
        p_plus: c.to_f64(p_plus),
        p_minus: c.to_f64(p_minus),
        label,
    };
    Ok(FixedRun {
        decision,
        kernel,
        z_plus,
        z_minus,
        trace,
    })
}

/// Quantize float audio with the ADC model and run the integer pipeline.
pub fn run_fixed(x: &[f64], model: &TrainedModel, cfg: &DatapathConfig) -> Result<FixedRun> {
    fixed_pipeline(&quantize_audio(x, &cfg.filter), model, cfg)
}

/// Multiply-accumulate `wᵀΦ + b` on raw integers, charged to the reference
/// stage. Exists to contrast with the MP path; its trace fails the audit.
pub fn fixed_linear_reference(phi: &[i64], w: &[i64], b: i64, trace: &mut OpTrace) -> Result<i64> {
    if phi.len() != w.len() {
        return domain(format!("kernel of length {} for {} weights", phi.len(), w.len()));
    }
    let mut alu = Alu::new(trace, Overflow::Saturate);
    alu.set_stage(Stage::Reference);
    let mut acc = b;
    for (f, w) in phi.iter().zip(w) {
        let prod = alu.mul_wide(*f, *w);
        acc = alu.add_wide(acc, prod);
    }
    Ok(acc)
}
