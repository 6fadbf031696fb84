//! Gradient training of the MP kernel machine with margin annealing,
//! quantization and bit-width sweeps.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filterbank::{
    filter_energies, fit_standardization, FilterBankModel, FilterMode, StandardizationStats,
};
use crate::fixedpoint::{run_fixed, DatapathConfig, FixedPointFormat};
use crate::kernel_machine::{
    assemble, classify_kernel, kernel_for, InferMode, QuantSpec, TrainedModel, GAMMA_N,
};
use crate::mp::{gradient_at, water_level};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// `(first epoch, γ₁)` breakpoints; each value holds until the next one.
    pub gamma1_schedule: Vec<(usize, f64)>,
    pub gamma_f: f64,
    pub seed: u64,
    pub quant_aware: bool,
    pub bits: u32,
    pub momentum: f64,
    pub temperature: f64,
    /// Parameters start uniform in `±init_scale`.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let epochs = 200;
        TrainConfig {
            learning_rate: 0.02,
            epochs,
            batch_size: 16,
            gamma1_schedule: geometric_schedule(2.0, 0.5, epochs),
            gamma_f: 0.5,
            seed: 0,
            quant_aware: false,
            bits: 8,
            momentum: 0.9,
            temperature: 0.25,
            init_scale: 0.1,
        }
    }
}

/// One breakpoint per epoch, decaying geometrically from `start` to `end`.
pub fn geometric_schedule(start: f64, end: f64, epochs: usize) -> Vec<(usize, f64)> {
    if epochs <= 1 {
        return vec![(0, end)];
    }
    (0..epochs)
        .map(|e| {
            let t = e as f64 / (epochs - 1) as f64;
            (e, start * (end / start).powf(t))
        })
        .collect()
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| {
            Err(Error::Config {
                field: field.into(),
                reason,
            })
        };
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate", format!("must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", format!("must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.temperature > 0.0) {
            return bad("temperature", "must be > 0".into());
        }
        if !(self.gamma_f > 0.0) {
            return bad("gamma_f", format!("must be > 0, got {}", self.gamma_f));
        }
        if !(2..=32).contains(&self.bits) {
            return bad("bits", format!("must lie in 2..=32, got {}", self.bits));
        }
        match self.gamma1_schedule.first() {
            Some((0, _)) => {}
            _ => return bad("gamma1_schedule", "must start at epoch 0".into()),
        }
        for w in self.gamma1_schedule.windows(2) {
            if w[1].0 <= w[0].0 {
                return bad("gamma1_schedule", "epochs must increase".into());
            }
            if w[1].1 > w[0].1 {
                return bad("gamma1_schedule", "margins must not increase".into());
            }
        }
        if self.gamma1_schedule.iter().any(|(_, g)| !(*g > 0.0)) {
            return bad("gamma1_schedule", "margins must be positive".into());
        }
        Ok(())
    }

    pub fn gamma1_at(&self, epoch: usize) -> f64 {
        self.gamma1_schedule
            .iter()
            .take_while(|(e, _)| *e <= epoch)
            .last()
            .map(|(_, g)| *g)
            .unwrap_or(self.gamma1_schedule[0].1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledClip {
    pub id: String,
    pub samples: Vec<f64>,
    /// `true` for the target class.
    pub label: bool,
    pub split: Split,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub clips: Vec<LabeledClip>,
}

impl LabeledDataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &LabeledClip> {
        self.clips.iter().filter(move |c| c.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }
}

/// Standardized kernels with their labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KernelSet {
    pub phi: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

impl KernelSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Accuracy of always predicting the more frequent label.
    pub fn majority_baseline(&self) -> f64 {
        let pos = self.labels.iter().filter(|&&l| l).count();
        pos.max(self.len() - pos) as f64 / self.len().max(1) as f64
    }
}

/// Classifier parameters `(w⁺, w⁻, b⁺, b⁻)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
    pub b_plus: f64,
    pub b_minus: f64,
}

impl Params {
    pub fn zeros(p: usize) -> Self {
        Params {
            w_plus: vec![0.0; p],
            w_minus: vec![0.0; p],
            b_plus: 0.0,
            b_minus: 0.0,
        }
    }

    pub fn random(p: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut draw = || rng.gen_range(-scale..=scale);
        Params {
            w_plus: (0..p).map(|_| draw()).collect(),
            w_minus: (0..p).map(|_| draw()).collect(),
            b_plus: draw(),
            b_minus: draw(),
        }
    }

    pub fn num_features(&self) -> usize {
        self.w_plus.len()
    }

    /// Layout `[w⁺ ‖ w⁻ ‖ b⁺ ‖ b⁻]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.w_plus.clone();
        v.extend(&self.w_minus);
        v.push(self.b_plus);
        v.push(self.b_minus);
        v
    }

    pub fn from_flat(v: &[f64]) -> Self {
        let p = (v.len() - 2) / 2;
        Params {
            w_plus: v[..p].to_vec(),
            w_minus: v[p..2 * p].to_vec(),
            b_plus: v[2 * p],
            b_minus: v[2 * p + 1],
        }
    }

    pub fn round_trip(&self, fmt: &FixedPointFormat) -> Params {
        Params::from_flat(&self.to_flat().iter().map(|&v| fmt.round_trip(v)).collect::<Vec<_>>())
    }

    fn max_abs(&self) -> f64 {
        self.to_flat().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn softplus(m: f64) -> f64 {
    m.max(0.0) + (-m.abs()).exp().ln_1p()
}

fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

/// Margin `p` of one kernel under `params`.
pub fn margin(params: &Params, phi: &[f64], gamma1: f64) -> f64 {
    let (mut plus, mut minus, mut scratch) = (Vec::new(), Vec::new(), Vec::new());
    assemble(
        &params.w_plus,
        &params.w_minus,
        params.b_plus,
        params.b_minus,
        phi,
        &mut plus,
        &mut minus,
    );
    let zp = water_level(&plus, gamma1, &mut scratch);
    let zm = water_level(&minus, gamma1, &mut scratch);
    crate::kernel_machine::decide(zp, zm).p
}

/// Logistic loss on the margin and its gradient in flat parameter layout.
fn example_loss_grad(params: &Params, phi: &[f64], label: bool, gamma1: f64, temperature: f64) -> (f64, Vec<f64>) {
    let p_len = params.num_features();
    let (mut plus, mut minus, mut scratch) = (Vec::new(), Vec::new(), Vec::new());
    assemble(
        &params.w_plus,
        &params.w_minus,
        params.b_plus,
        params.b_minus,
        phi,
        &mut plus,
        &mut minus,
    );
    let zp = water_level(&plus, gamma1, &mut scratch);
    let zm = water_level(&minus, gamma1, &mut scratch);
    let z = water_level(&[zp, zm], GAMMA_N, &mut scratch);
    let (sp, sm) = (f64::from(u8::from(zp > z)), f64::from(u8::from(zm > z)));
    let n = sp + sm;
    let (dz_dzp, dz_dzm) = (sp / n, sm / n);
    let p = (zp - z).max(0.0) - (zm - z).max(0.0);
    // ∂p/∂z⁺ and ∂p/∂z⁻ through both rectified branches
    let dp_dzp = sp * (1.0 - dz_dzp) + sm * dz_dzp;
    let dp_dzm = -sp * dz_dzm - sm * (1.0 - dz_dzm);

    let y = if label { 1.0 } else { -1.0 };
    let m = -y * p / temperature;
    let loss = softplus(m);
    let dl_dp = -(y / temperature) * sigmoid(m);

    let ga = gradient_at(&plus, zp).partials;
    let gb = gradient_at(&minus, zm).partials;
    let ca = dl_dp * dp_dzp;
    let cb = dl_dp * dp_dzm;
    let mut grad = vec![0.0; 2 * p_len + 2];
    for i in 0..p_len {
        grad[i] = ca * ga[i] + cb * gb[i];
        grad[p_len + i] = ca * ga[p_len + i] + cb * gb[p_len + i];
    }
    grad[2 * p_len] = ca * ga[2 * p_len];
    grad[2 * p_len + 1] = cb * gb[2 * p_len];
    (loss, grad)
}

/// Mean loss over `idx` and its gradient, summed in index order.
pub fn loss_and_gradient(
    params: &Params,
    set: &KernelSet,
    idx: &[usize],
    gamma1: f64,
    temperature: f64,
) -> (f64, Vec<f64>) {
    let parts: Vec<(f64, Vec<f64>)> = idx
        .par_iter()
        .map(|&i| example_loss_grad(params, &set.phi[i], set.labels[i], gamma1, temperature))
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; 2 * params.num_features() + 2];
    for (l, g) in &parts {
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    let k = idx.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= k);
    (loss / k, grad)
}

pub fn mean_loss(params: &Params, set: &KernelSet, gamma1: f64, temperature: f64) -> f64 {
    let idx: Vec<usize> = (0..set.len()).collect();
    loss_and_gradient(params, set, &idx, gamma1, temperature).0
}

pub fn accuracy(params: &Params, set: &KernelSet, gamma1: f64) -> f64 {
    let correct = set
        .phi
        .par_iter()
        .zip(set.labels.par_iter())
        .filter(|(phi, &l)| (margin(params, phi, gamma1) > 0.0) == l)
        .count();
    correct as f64 / set.len().max(1) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub gamma1: f64,
}

pub const TRAIN_LOG_CSV_HEADER: &str = "epoch,loss,train_acc,gamma1";

pub fn write_training_log<W: Write>(log: &[EpochLog], mut out: W) -> Result<()> {
    writeln!(out, "{TRAIN_LOG_CSV_HEADER}")?;
    for e in log {
        writeln!(out, "{},{},{},{}", e.epoch, e.loss, e.train_acc, e.gamma1)?;
    }
    Ok(())
}

/// Minibatch SGD with momentum on precomputed kernels. With
/// `cfg.quant_aware` the forward pass uses parameters rounded to `cfg.bits`
/// and the gradient is applied to the float copy unchanged.
pub fn train_kernels(set: &KernelSet, cfg: &TrainConfig) -> Result<(Params, Vec<EpochLog>)> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::Training("empty training split".into()));
    }
    let p = set.phi[0].len();
    if set.phi.iter().any(|f| f.len() != p) {
        return Err(Error::Training("ragged kernel matrix".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut theta = Params::random(p, cfg.init_scale, &mut rng).to_flat();
    let mut velocity = vec![0.0; theta.len()];
    let mut order: Vec<usize> = (0..set.len()).collect();
    let forward = |theta: &[f64]| -> Result<Params> {
        let params = Params::from_flat(theta);
        if cfg.quant_aware {
            let fmt = FixedPointFormat::fit(cfg.bits, params.max_abs())?;
            Ok(params.round_trip(&fmt))
        } else {
            Ok(params)
        }
    };
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let gamma1 = cfg.gamma1_at(epoch);
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let params = forward(&theta)?;
            let (loss, grad) = loss_and_gradient(&params, set, batch, gamma1, cfg.temperature);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite loss {loss} at epoch {epoch} (gamma1 {gamma1})"
                )));
            }
            for ((t, v), g) in theta.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *t += *v;
            }
        }
        let params = forward(&theta)?;
        let loss = mean_loss(&params, set, gamma1, cfg.temperature);
        if !loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite loss {loss} at epoch {epoch} (gamma1 {gamma1})"
            )));
        }
        let entry = EpochLog {
            epoch,
            loss,
            train_acc: accuracy(&params, set, gamma1),
            gamma1,
        };
        log::debug!(
            "epoch {} loss {:.5} train acc {:.4} gamma1 {:.4}",
            entry.epoch,
            entry.loss,
            entry.train_acc,
            entry.gamma1
        );
        log.push(entry);
    }
    Ok((forward(&theta)?, log))
}

/// Accumulated energies of every clip, computed in parallel.
pub fn clip_energies<'a>(
    clips: impl IntoIterator<Item = &'a LabeledClip>,
    bank: &FilterBankModel,
    mode: FilterMode,
) -> Result<Vec<Vec<f64>>> {
    let clips: Vec<&LabeledClip> = clips.into_iter().collect();
    clips
        .par_iter()
        .map(|c| filter_energies(&c.samples, bank, mode))
        .collect()
}

fn standardized(rows: &[Vec<f64>], stats: &StandardizationStats) -> Result<Vec<Vec<f64>>> {
    rows.iter().map(|r| Ok(stats.standardize(r)?.phi)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub log: Vec<EpochLog>,
    pub train_acc: f64,
}

/// Fit statistics on the training split (MP-mode filters), then train the
/// classifier on the standardized training kernels.
pub fn train(dataset: &LabeledDataset, bank: &FilterBankModel, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train: Vec<&LabeledClip> = dataset.split(Split::Train).collect();
    if train.len() < 2 {
        return Err(Error::Training(format!(
            "training split has {} clips, need at least 2",
            train.len()
        )));
    }
    let mode = FilterMode::Mp {
        gamma_f: cfg.gamma_f,
    };
    let energies = clip_energies(train.iter().copied(), bank, mode)?;
    let stats = fit_standardization(&energies)?;
    let set = KernelSet {
        phi: standardized(&energies, &stats)?,
        labels: train.iter().map(|c| c.label).collect(),
    };
    let (params, log) = train_kernels(&set, cfg)?;
    let gamma1 = cfg.gamma1_at(cfg.epochs - 1);
    let train_acc = accuracy(&params, &set, gamma1);
    let model = TrainedModel {
        w_plus: params.w_plus,
        w_minus: params.w_minus,
        b_plus: params.b_plus,
        b_minus: params.b_minus,
        gamma1,
        gamma_n: GAMMA_N,
        gamma_f: cfg.gamma_f,
        stats,
        bank: bank.clone(),
        quant: None,
    };
    let model = if cfg.quant_aware {
        quantize_model(&model, cfg.bits)?
    } else {
        model
    };
    Ok(TrainOutcome {
        model,
        log,
        train_acc,
    })
}

fn max_abs<'a>(values: impl IntoIterator<Item = &'a f64>) -> f64 {
    values.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Per-group formats of `bits` fitted to the model's magnitudes.
pub fn fit_quant_spec(model: &TrainedModel, bits: u32) -> Result<QuantSpec> {
    let weights = model
        .w_plus
        .iter()
        .chain(&model.w_minus)
        .chain([&model.b_plus, &model.b_minus]);
    Ok(QuantSpec {
        bits,
        band_pass: FixedPointFormat::fit(bits, max_abs(model.bank.bp_coeffs.iter().flatten()))?,
        low_pass: FixedPointFormat::fit(bits, max_abs(model.bank.lp_coeffs.iter().flatten()))?,
        weights: FixedPointFormat::fit(bits, max_abs(weights))?,
        mean: FixedPointFormat::fit(bits, max_abs(&model.stats.mu))?,
        sigma: FixedPointFormat::fit(bits, max_abs(&model.stats.sigma))?,
    })
}

/// Round every stored parameter into its group format of `bits`.
pub fn quantize_model(model: &TrainedModel, bits: u32) -> Result<TrainedModel> {
    quantize_model_with(model, &fit_quant_spec(model, bits)?)
}

/// Round every stored parameter into the given formats; out-of-range values
/// saturate with a warning.
pub fn quantize_model_with(model: &TrainedModel, spec: &QuantSpec) -> Result<TrainedModel> {
    let mut clipped = 0usize;
    let mut q = |v: f64, fmt: &FixedPointFormat| {
        let (raw, sat) = fmt.quantize(v);
        clipped += usize::from(sat);
        fmt.to_f64(raw)
    };
    let mut out = model.clone();
    for h in &mut out.bank.bp_coeffs {
        h.iter_mut().for_each(|v| *v = q(*v, &spec.band_pass));
    }
    for h in &mut out.bank.lp_coeffs {
        h.iter_mut().for_each(|v| *v = q(*v, &spec.low_pass));
    }
    for v in out.w_plus.iter_mut().chain(out.w_minus.iter_mut()) {
        *v = q(*v, &spec.weights);
    }
    out.b_plus = q(out.b_plus, &spec.weights);
    out.b_minus = q(out.b_minus, &spec.weights);
    out.stats.mu.iter_mut().for_each(|v| *v = q(*v, &spec.mean));
    // a zero σ would become the floor; keep it representable instead
    for v in &mut out.stats.sigma {
        let r = q(*v, &spec.sigma);
        *v = if r > 0.0 || *v == 0.0 { r } else { spec.sigma.lsb() };
    }
    if clipped > 0 {
        log::warn!("{clipped} parameters saturated while quantizing to {} bits", spec.bits);
    }
    out.quant = Some(spec.clone());
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    pub fn ratio(&self) -> f64 {
        self.correct as f64 / self.total.max(1) as f64
    }
}

/// Per-clip decisions on one split in the given mode, in clip order.
pub fn predict(
    model: &TrainedModel,
    dataset: &LabeledDataset,
    split: Split,
    mode: InferMode,
) -> Result<Vec<bool>> {
    let clips: Vec<&LabeledClip> = dataset.split(split).collect();
    let fixed_model;
    let model = match (mode, &model.quant) {
        (InferMode::Fixed, None) => {
            fixed_model = quantize_model(model, 8)?;
            &fixed_model
        }
        _ => model,
    };
    let cfg = DatapathConfig::default();
    clips
        .par_iter()
        .map(|c| match mode {
            InferMode::Fixed => Ok(run_fixed(&c.samples, model, &cfg)?.decision.label),
            _ => Ok(classify_kernel(&kernel_for(&c.samples, model, mode)?, model)?.label),
        })
        .collect()
}

pub fn evaluate(model: &TrainedModel, dataset: &LabeledDataset, split: Split, mode: InferMode) -> Result<Accuracy> {
    let labels: Vec<bool> = dataset.split(split).map(|c| c.label).collect();
    let predicted = predict(model, dataset, split, mode)?;
    Ok(Accuracy {
        correct: labels.iter().zip(&predicted).filter(|(a, b)| a == b).count(),
        total: labels.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// `None` is the unquantized float reference.
    pub width: Option<u32>,
    pub train_acc: f64,
    pub test_acc: f64,
}

pub const SWEEP_CSV_HEADER: &str = "width,train_acc,test_acc";

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        let w = r.width.map_or_else(|| "float".to_string(), |w| w.to_string());
        writeln!(out, "{w},{},{}", r.train_acc, r.test_acc)?;
    }
    Ok(())
}

fn round_rows(rows: &[Vec<f64>], fmt: &FixedPointFormat) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| r.iter().map(|&v| fmt.round_trip(v)).collect())
        .collect()
}

/// Train and evaluate once in float and once per width. At width `b` the
/// filter taps, statistics, kernels and classifier parameters are all held in
/// `b`-bit formats fitted to their training-set range, and training is
/// quantization-aware.
pub fn bitwidth_sweep(
    dataset: &LabeledDataset,
    bank: &FilterBankModel,
    cfg: &TrainConfig,
    widths: &[u32],
) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let train: Vec<&LabeledClip> = dataset.split(Split::Train).collect();
    let test: Vec<&LabeledClip> = dataset.split(Split::Test).collect();
    if train.len() < 2 || test.is_empty() {
        return Err(Error::Training("sweep needs a training and a test split".into()));
    }
    let train_labels: Vec<bool> = train.iter().map(|c| c.label).collect();
    let test_labels: Vec<bool> = test.iter().map(|c| c.label).collect();
    let mode = FilterMode::Mp {
        gamma_f: cfg.gamma_f,
    };
    let gamma_last = cfg.gamma1_at(cfg.epochs - 1);

    let run = |width: Option<u32>| -> Result<SweepRow> {
        let mut bank_w = bank.clone();
        if let Some(b) = width {
            let bp = FixedPointFormat::fit(b, max_abs(bank.bp_coeffs.iter().flatten()))?;
            let lp = FixedPointFormat::fit(b, max_abs(bank.lp_coeffs.iter().flatten()))?;
            bank_w.bp_coeffs = round_rows(&bank.bp_coeffs, &bp);
            bank_w.lp_coeffs = round_rows(&bank.lp_coeffs, &lp);
        }
        let e_train = clip_energies(train.iter().copied(), &bank_w, mode)?;
        let e_test = clip_energies(test.iter().copied(), &bank_w, mode)?;
        let mut stats = fit_standardization(&e_train)?;
        if let Some(b) = width {
            let mf = FixedPointFormat::fit(b, max_abs(&stats.mu))?;
            let sf = FixedPointFormat::fit(b, max_abs(&stats.sigma))?;
            stats.mu.iter_mut().for_each(|v| *v = mf.round_trip(*v));
            for v in &mut stats.sigma {
                let r = sf.round_trip(*v);
                *v = if r > 0.0 || *v == 0.0 { r } else { sf.lsb() };
            }
        }
        let mut phi_train = standardized(&e_train, &stats)?;
        let mut phi_test = standardized(&e_test, &stats)?;
        let mut run_cfg = cfg.clone();
        if let Some(b) = width {
            let kf = FixedPointFormat::fit(b, max_abs(phi_train.iter().flatten()))?;
            phi_train = round_rows(&phi_train, &kf);
            phi_test = round_rows(&phi_test, &kf);
            run_cfg.quant_aware = true;
            run_cfg.bits = b;
        } else {
            run_cfg.quant_aware = false;
        }
        let train_set = KernelSet {
            phi: phi_train,
            labels: train_labels.clone(),
        };
        let test_set = KernelSet {
            phi: phi_test,
            labels: test_labels.clone(),
        };
        let (params, _) = train_kernels(&train_set, &run_cfg)?;
        Ok(SweepRow {
            width,
            train_acc: accuracy(&params, &train_set, gamma_last),
            test_acc: accuracy(&params, &test_set, gamma_last),
        })
    };

    let mut rows = vec![run(None)?];
    for &w in widths {
        rows.push(run(Some(w))?);
    }
    Ok(rows)
}
