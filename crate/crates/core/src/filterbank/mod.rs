//! Greenwood-spaced, octave-decimated FIR band-pass bank.
//!
//! Filters are grouped into octaves of equal size. Octave `o` runs at
//! `base_sample_rate / 2^o`; its input is the previous octave's stream after
//! a short anti-alias low-pass and a factor-two decimation, so every band-pass
//! filter keeps the same short length.

mod design;
mod fir;
mod kernel;

pub use design::{design_bank, design_reference_filter, magnitude_response};
pub use fir::{accumulate, decimate, fir_exact, fir_mp, hwr};
pub use kernel::{
    extract_kernel, filter_energies, filter_outputs, fit_standardization, KernelVector,
    StandardizationStats, SIGMA_FLOOR,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arithmetic used by the FIR stages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterMode {
    /// Multiply-accumulate convolution.
    Exact,
    /// MP-approximated inner products with margin `gamma_f`.
    Mp { gamma_f: f64 },
}

/// Constants of the place-to-frequency map `f(u) = A (10^(a u) − k)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenwoodParams {
    pub scale_hz: f64,
    pub slope: f64,
    pub offset: f64,
}

impl Default for GreenwoodParams {
    fn default() -> Self {
        GreenwoodParams {
            scale_hz: 165.4,
            slope: 2.1,
            offset: 0.88,
        }
    }
}

impl GreenwoodParams {
    pub fn frequency(&self, place: f64) -> f64 {
        self.scale_hz * (10f64.powf(self.slope * place) - self.offset)
    }

    pub fn place(&self, freq_hz: f64) -> f64 {
        (freq_hz / self.scale_hz + self.offset).log10() / self.slope
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterBankConfig {
    pub total_filters: usize,
    pub filters_per_octave: usize,
    pub num_octaves: usize,
    pub bp_taps: usize,
    pub lp_taps: usize,
    pub base_sample_rate: f64,
    pub greenwood: GreenwoodParams,
    /// `(f_low, f_high)` in Hz; the lowest and highest center frequencies.
    pub freq_range: (f64, f64),
    /// Input samples are scaled by `2^-input_shift` before the first stage.
    pub input_shift: u32,
}

impl Default for FilterBankConfig {
    fn default() -> Self {
        FilterBankConfig {
            total_filters: 30,
            filters_per_octave: 5,
            num_octaves: 6,
            bp_taps: 16,
            lp_taps: 6,
            base_sample_rate: 16000.0,
            greenwood: GreenwoodParams::default(),
            freq_range: (60.0, 4400.0),
            input_shift: 4,
        }
    }
}

impl FilterBankConfig {
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, reason: String| {
            Err(Error::Config {
                field: name.to_string(),
                reason,
            })
        };
        if self.filters_per_octave == 0 || self.num_octaves == 0 {
            return field("filters_per_octave", "octave structure must be non-empty".into());
        }
        if self.total_filters != self.filters_per_octave * self.num_octaves {
            return field(
                "total_filters",
                format!(
                    "{} != {} filters/octave x {} octaves",
                    self.total_filters, self.filters_per_octave, self.num_octaves
                ),
            );
        }
        if self.bp_taps == 0 {
            return field("bp_taps", "must be positive".into());
        }
        if self.lp_taps == 0 {
            return field("lp_taps", "must be positive".into());
        }
        if !(self.base_sample_rate > 0.0) {
            return field("base_sample_rate", "must be positive".into());
        }
        let (lo, hi) = self.freq_range;
        if !(lo > 0.0) {
            return field("freq_range", format!("f_low must be > 0, got {lo}"));
        }
        if !(hi < self.base_sample_rate / 2.0) {
            return field(
                "freq_range",
                format!("f_high {hi} must be below Nyquist {}", self.base_sample_rate / 2.0),
            );
        }
        if !(lo < hi) {
            return field("freq_range", format!("f_low {lo} must be below f_high {hi}"));
        }
        if self.input_shift > 16 {
            return field("input_shift", "at most 16".into());
        }
        Ok(())
    }

    pub fn octave_rate(&self, octave: usize) -> f64 {
        self.base_sample_rate / (1u64 << octave) as f64
    }
}

/// Designed coefficients and placement of every filter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterBankModel {
    pub config: FilterBankConfig,
    /// Band-pass taps `h_p`, one set per filter.
    pub bp_coeffs: Vec<Vec<f64>>,
    /// Anti-alias low-pass taps, one set per decimation stage.
    pub lp_coeffs: Vec<Vec<f64>>,
    /// Descending center frequencies in Hz.
    pub center_freqs: Vec<f64>,
    /// Pass-band edges `(low, high)` in Hz.
    pub band_edges: Vec<(f64, f64)>,
    pub octave_of: Vec<usize>,
}

impl FilterBankModel {
    pub fn num_filters(&self) -> usize {
        self.bp_coeffs.len()
    }

    pub fn filters_in_octave(&self, octave: usize) -> impl Iterator<Item = usize> + '_ {
        self.octave_of
            .iter()
            .enumerate()
            .filter(move |(_, &o)| o == octave)
            .map(|(p, _)| p)
    }

    pub fn input_gain(&self) -> f64 {
        (-(self.config.input_shift as f64)).exp2()
    }
}
