//! MP-domain kernel machine: differential scores, normalization and the
//! water-filling readout.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::filterbank::{extract_kernel, FilterBankModel, FilterMode, KernelVector, StandardizationStats};
use crate::fixedpoint::{self, DatapathConfig, FixedPointFormat};
use crate::mp::water_level;

/// Normalization margin of the two-way readout.
pub const GAMMA_N: f64 = 1.0;

/// Storage formats of a quantized model, one per parameter group. Every
/// group shares `bits` and gets the finest fraction split that holds its
/// largest magnitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantSpec {
    pub bits: u32,
    pub band_pass: FixedPointFormat,
    pub low_pass: FixedPointFormat,
    pub weights: FixedPointFormat,
    pub mean: FixedPointFormat,
    pub sigma: FixedPointFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
    pub b_plus: f64,
    pub b_minus: f64,
    pub gamma1: f64,
    pub gamma_n: f64,
    pub gamma_f: f64,
    pub stats: StandardizationStats,
    pub bank: FilterBankModel,
    pub quant: Option<QuantSpec>,
}

impl TrainedModel {
    pub fn num_features(&self) -> usize {
        self.w_plus.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.w_plus.len();
        if self.w_minus.len() != p {
            return domain(format!("w_minus has {} entries, w_plus {p}", self.w_minus.len()));
        }
        if self.stats.len() != p || self.bank.num_filters() != p {
            return domain(format!(
                "{p} weights for {} filters and {} fitted statistics",
                self.bank.num_filters(),
                self.stats.len()
            ));
        }
        if !(self.gamma1 > 0.0) || !(self.gamma_n > 0.0) || !(self.gamma_f > 0.0) {
            return domain("margins must be positive");
        }
        Ok(())
    }

    /// Model with the positive and negative rails exchanged.
    pub fn swapped(&self) -> TrainedModel {
        TrainedModel {
            w_plus: self.w_minus.clone(),
            w_minus: self.w_plus.clone(),
            b_plus: self.b_minus,
            b_minus: self.b_plus,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub p: f64,
    pub p_plus: f64,
    pub p_minus: f64,
    /// `true` for the target class.
    pub label: bool,
}

pub const DECISION_CSV_HEADER: &str = "clip,p,p_plus,p_minus,label";

impl Decision {
    pub fn csv_row(&self, clip: &str) -> String {
        format!(
            "{clip},{},{},{},{}",
            self.p,
            self.p_plus,
            self.p_minus,
            u8::from(self.label)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferMode {
    Exact,
    Mp,
    Fixed,
}

impl std::str::FromStr for InferMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(InferMode::Exact),
            "mp" => Ok(InferMode::Mp),
            "fixed" => Ok(InferMode::Fixed),
            other => Err(Error::Config {
                field: "mode".into(),
                reason: format!("expected exact, mp or fixed, got {other:?}"),
            }),
        }
    }
}

/// Fill `plus` with `[w⁺+Φ ‖ w⁻−Φ ‖ b⁺]` and `minus` with
/// `[w⁺−Φ ‖ w⁻+Φ ‖ b⁻]`.
pub(crate) fn assemble(
    w_plus: &[f64],
    w_minus: &[f64],
    b_plus: f64,
    b_minus: f64,
    phi: &[f64],
    plus: &mut Vec<f64>,
    minus: &mut Vec<f64>,
) {
    plus.clear();
    minus.clear();
    plus.extend(w_plus.iter().zip(phi).map(|(w, f)| w + f));
    plus.extend(w_minus.iter().zip(phi).map(|(w, f)| w - f));
    plus.push(b_plus);
    minus.extend(w_plus.iter().zip(phi).map(|(w, f)| w - f));
    minus.extend(w_minus.iter().zip(phi).map(|(w, f)| w + f));
    minus.push(b_minus);
}

/// Differential scores `(z⁺, z⁻)`.
pub fn score(phi: &KernelVector, model: &TrainedModel) -> Result<(f64, f64)> {
    let p = model.num_features();
    if phi.len() != p || model.w_minus.len() != p {
        return domain(format!("kernel of length {} for a model of {p} features", phi.len()));
    }
    if !(model.gamma1 > 0.0) {
        return domain(format!("gamma1 must be > 0, got {}", model.gamma1));
    }
    let (mut plus, mut minus, mut scratch) = (Vec::new(), Vec::new(), Vec::new());
    assemble(
        &model.w_plus,
        &model.w_minus,
        model.b_plus,
        model.b_minus,
        &phi.phi,
        &mut plus,
        &mut minus,
    );
    Ok((
        water_level(&plus, model.gamma1, &mut scratch),
        water_level(&minus, model.gamma1, &mut scratch),
    ))
}

/// Normalize the score pair and read out `p = p⁺ − p⁻`. A zero margin is
/// assigned to the negative class.
pub fn decide(z_plus: f64, z_minus: f64) -> Decision {
    let z = water_level(&[z_plus, z_minus], GAMMA_N, &mut Vec::with_capacity(2));
    let p_plus = (z_plus - z).max(0.0);
    let p_minus = (z_minus - z).max(0.0);
    let p = p_plus - p_minus;
    Decision {
        p,
        p_plus,
        p_minus,
        label: p > 0.0,
    }
}

pub fn classify_kernel(phi: &KernelVector, model: &TrainedModel) -> Result<Decision> {
    let (zp, zm) = score(phi, model)?;
    Ok(decide(zp, zm))
}

/// Kernel vector of a clip in the given float mode.
pub fn kernel_for(x: &[f64], model: &TrainedModel, mode: InferMode) -> Result<KernelVector> {
    let filter_mode = match mode {
        InferMode::Exact => FilterMode::Exact,
        InferMode::Mp => FilterMode::Mp {
            gamma_f: model.gamma_f,
        },
        InferMode::Fixed => return domain("fixed mode has no float kernel"),
    };
    extract_kernel(x, &model.bank, &model.stats, filter_mode)
}

/// End-to-end decision for one clip at the bank's base rate. `Fixed` runs
/// the integer pipeline with the default datapath, quantizing an unquantized
/// model to 8 bits first.
pub fn infer(x: &[f64], model: &TrainedModel, mode: InferMode) -> Result<Decision> {
    model.validate()?;
    match mode {
        InferMode::Exact | InferMode::Mp => classify_kernel(&kernel_for(x, model, mode)?, model),
        InferMode::Fixed => {
            let cfg = DatapathConfig::default();
            let run = match &model.quant {
                Some(_) => fixedpoint::run_fixed(x, model, &cfg)?,
                None => {
                    let q = crate::trainer::quantize_model(model, 8)?;
                    fixedpoint::run_fixed(x, &q, &cfg)?
                }
            };
            Ok(run.decision)
        }
    }
}

/// `wᵀΦ + b` with ordinary multiply-accumulate; a test oracle only.
pub fn linear_reference(phi: &KernelVector, w: &[f64], b: f64) -> Result<f64> {
    if phi.len() != w.len() {
        return domain(format!("kernel of length {} for {} weights", phi.len(), w.len()));
    }
    Ok(phi.phi.iter().zip(w).map(|(f, w)| f * w).sum::<f64>() + b)
}
