//! Swept-sine probes of the filter bank and its time/gain response table.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::filterbank::{filter_outputs, FilterBankModel, FilterMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Linear,
    Logarithmic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chirp {
    pub f_start: f64,
    pub f_end: f64,
    pub duration_s: f64,
    pub amplitude: f64,
    pub kind: SweepKind,
}

impl Chirp {
    /// Sweep covering the bank's center frequencies with a margin of a
    /// third of an octave on both sides.
    pub fn spanning(bank: &FilterBankModel, kind: SweepKind) -> Self {
        let lo = bank.center_freqs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = bank.center_freqs.iter().copied().fold(0.0, f64::max);
        let nyquist = bank.config.base_sample_rate / 2.0;
        Chirp {
            f_start: lo * 2f64.powf(-1.0 / 3.0),
            f_end: (hi * 2f64.powf(1.0 / 3.0)).min(0.95 * nyquist),
            duration_s: 1.0,
            amplitude: 1.0,
            kind,
        }
    }

    /// Instantaneous frequency at time `t`.
    pub fn frequency_at(&self, t: f64) -> f64 {
        let frac = t / self.duration_s;
        match self.kind {
            SweepKind::Linear => self.f_start + (self.f_end - self.f_start) * frac,
            SweepKind::Logarithmic => self.f_start * (self.f_end / self.f_start).powf(frac),
        }
    }

    pub fn samples(&self, rate: f64) -> Vec<f64> {
        let n = (self.duration_s * rate).round() as usize;
        let (f0, f1, dur) = (self.f_start, self.f_end, self.duration_s);
        (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                let phase = match self.kind {
                    SweepKind::Linear => 2.0 * PI * (f0 * t + 0.5 * (f1 - f0) / dur * t * t),
                    SweepKind::Logarithmic => {
                        let k = (f1 / f0).ln();
                        2.0 * PI * f0 * dur / k * ((t / dur * k).exp() - 1.0)
                    }
                };
                self.amplitude * phase.sin()
            })
            .collect()
    }
}

/// Mean rectified output of every filter in equal time bins.
#[derive(Clone, Debug, PartialEq)]
pub struct ChirpResponse {
    pub center_freqs: Vec<f64>,
    pub bin_seconds: f64,
    /// `gains[p][bin]`.
    pub gains: Vec<Vec<f64>>,
}

pub const CHIRP_CSV_HEADER: &str = "filter,center_hz,bin,time_s,gain";

impl ChirpResponse {
    /// Time bin of maximum gain for each filter.
    pub fn peak_bins(&self) -> Vec<usize> {
        self.gains
            .iter()
            .map(|g| {
                g.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                        if v > best.1 {
                            (i, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }

    /// Peak bins never move earlier as the center frequency rises, i.e. the
    /// ridge is monotone for an up-sweep with descending filter order.
    pub fn ridge_is_monotone(&self) -> bool {
        self.peak_bins().windows(2).all(|w| w[0] >= w[1])
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CHIRP_CSV_HEADER}")?;
        for (p, gains) in self.gains.iter().enumerate() {
            for (bin, g) in gains.iter().enumerate() {
                let t = (bin as f64 + 0.5) * self.bin_seconds;
                writeln!(out, "{p},{},{bin},{t},{g}", self.center_freqs[p])?;
            }
        }
        Ok(())
    }
}

pub fn chirp_response(
    bank: &FilterBankModel,
    mode: FilterMode,
    chirp: &Chirp,
    bins: usize,
) -> Result<ChirpResponse> {
    let x = chirp.samples(bank.config.base_sample_rate);
    let outputs = filter_outputs(&x, bank, mode)?;
    let gains = outputs
        .iter()
        .map(|y| {
            (0..bins)
                .map(|b| {
                    let (lo, hi) = (b * y.len() / bins, (b + 1) * y.len() / bins);
                    if hi <= lo {
                        return 0.0;
                    }
                    y[lo..hi].iter().map(|v| v.abs()).sum::<f64>() / (hi - lo) as f64
                })
                .collect()
        })
        .collect();
    Ok(ChirpResponse {
        center_freqs: bank.center_freqs.clone(),
        bin_seconds: chirp.duration_s / bins as f64,
        gains,
    })
}

/// Steady-state amplitude gain of every filter (through its decimation
/// chain) for a unit sine at `freq_hz`.
pub fn tone_gains(bank: &FilterBankModel, freq_hz: f64, mode: FilterMode) -> Result<Vec<f64>> {
    let rate = bank.config.base_sample_rate;
    let n = rate as usize;
    let x: Vec<f64> = (0..n)
        .map(|i| (2.0 * PI * freq_hz * i as f64 / rate).sin())
        .collect();
    let scale = 1.0 / bank.input_gain();
    Ok(filter_outputs(&x, bank, mode)?
        .iter()
        .map(|y| {
            let tail = &y[y.len() / 4..];
            let rms = (tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64).sqrt();
            rms * 2f64.sqrt() * scale
        })
        .collect())
}

/// Frequency of maximum gain for every filter of the decimated bank, searched
/// over `grid` and refined around each coarse peak.
#[allow(clippy::needless_range_loop)]
pub fn measured_peak_frequencies(bank: &FilterBankModel, grid: &[f64]) -> Result<Vec<f64>> {
    let coarse: Vec<Vec<f64>> = grid
        .iter()
        .map(|&f| tone_gains(bank, f, FilterMode::Exact))
        .collect::<Result<_>>()?;
    let p_count = bank.num_filters();
    let mut peaks = Vec::with_capacity(p_count);
    for p in 0..p_count {
        let best = (0..grid.len())
            .max_by(|&a, &b| coarse[a][p].total_cmp(&coarse[b][p]))
            .expect("non-empty grid");
        let lo = grid[best.saturating_sub(1)];
        let hi = grid[(best + 1).min(grid.len() - 1)];
        let mut peak = (grid[best], coarse[best][p]);
        for i in 0..=24 {
            let f = lo + (hi - lo) * i as f64 / 24.0;
            let g = tone_gains(bank, f, FilterMode::Exact)?[p];
            if g > peak.1 {
                peak = (f, g);
            }
        }
        peaks.push(peak.0);
    }
    Ok(peaks)
}
