use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fir::{accumulate, decimate, hwr, run_fir};
use super::{FilterBankModel, FilterMode};
use crate::error::{domain, Error, Result};

/// Replaces a zero standard deviation so constant features standardize to 0.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Per-filter mean and sample standard deviation of the accumulated
/// rectified outputs, fitted on training clips only. An empty value is the
/// unfitted state.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl StandardizationStats {
    pub fn is_fitted(&self) -> bool {
        !self.mu.is_empty()
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// `(s_p − μ_p) / σ_p` for every filter.
    pub fn standardize(&self, energies: &[f64]) -> Result<KernelVector> {
        if !self.is_fitted() {
            return Err(Error::State("standardization statistics are not fitted".into()));
        }
        if energies.len() != self.mu.len() {
            return domain(format!(
                "{} energies for {} fitted filters",
                energies.len(),
                self.mu.len()
            ));
        }
        let phi = energies
            .iter()
            .zip(self.mu.iter().zip(&self.sigma))
            .map(|(s, (mu, sigma))| (s - mu) / effective_sigma(*sigma))
            .collect();
        Ok(KernelVector { phi })
    }
}

pub(crate) fn effective_sigma(sigma: f64) -> f64 {
    if sigma > 0.0 {
        sigma
    } else {
        SIGMA_FLOOR
    }
}

/// The `P × 1` feature vector fed to the kernel machine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelVector {
    pub phi: Vec<f64>,
}

impl KernelVector {
    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }
}

/// Mean and Bessel-corrected standard deviation per column of `rows`
/// (one row of accumulated energies per training clip).
pub fn fit_standardization(rows: &[Vec<f64>]) -> Result<StandardizationStats> {
    let m = rows.len();
    if m < 2 {
        return domain(format!("standardization needs at least 2 clips, got {m}"));
    }
    let p = rows[0].len();
    if rows.iter().any(|r| r.len() != p) {
        return domain("ragged energy matrix");
    }
    let mut mu = vec![0.0; p];
    for row in rows {
        for (acc, v) in mu.iter_mut().zip(row) {
            *acc += v;
        }
    }
    mu.iter_mut().for_each(|v| *v /= m as f64);
    let mut sigma = vec![0.0; p];
    for row in rows {
        for ((acc, v), mean) in sigma.iter_mut().zip(row).zip(&mu) {
            *acc += (v - mean) * (v - mean);
        }
    }
    sigma
        .iter_mut()
        .for_each(|v| *v = (*v / (m - 1) as f64).sqrt());
    Ok(StandardizationStats { mu, sigma })
}

/// Input streams of every octave: octave 0 is the scaled input, each later
/// octave is the previous one low-passed and decimated by two.
fn octave_streams(x: &[f64], bank: &FilterBankModel, mode: FilterMode) -> Result<Vec<Vec<f64>>> {
    let gain = bank.input_gain();
    let mut streams = Vec::with_capacity(bank.config.num_octaves);
    streams.push(x.iter().map(|v| v * gain).collect::<Vec<f64>>());
    for lp in &bank.lp_coeffs {
        let next = decimate(streams.last().expect("non-empty"), lp, mode)?;
        streams.push(next);
    }
    Ok(streams)
}

/// Raw band-pass output of every filter, each at its octave's rate.
pub fn filter_outputs(x: &[f64], bank: &FilterBankModel, mode: FilterMode) -> Result<Vec<Vec<f64>>> {
    let streams = octave_streams(x, bank, mode)?;
    bank.bp_coeffs
        .par_iter()
        .zip(bank.octave_of.par_iter())
        .map(|(h, &o)| run_fir(&streams[o], h, mode))
        .collect()
}

/// Accumulated half-wave-rectified output `s_p` of every filter.
pub fn filter_energies(x: &[f64], bank: &FilterBankModel, mode: FilterMode) -> Result<Vec<f64>> {
    Ok(filter_outputs(x, bank, mode)?
        .iter()
        .map(|y| accumulate(&y.iter().map(|&v| hwr(v)).collect::<Vec<f64>>()))
        .collect())
}

/// Kernel vector `Φ` of one clip: filter, rectify, accumulate, standardize.
pub fn extract_kernel(
    x: &[f64],
    bank: &FilterBankModel,
    stats: &StandardizationStats,
    mode: FilterMode,
) -> Result<KernelVector> {
    if !stats.is_fitted() {
        return Err(Error::State("standardization statistics are not fitted".into()));
    }
    stats.standardize(&filter_energies(x, bank, mode)?)
}
