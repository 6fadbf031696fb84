use std::f64::consts::PI;

use super::{FilterBankConfig, FilterBankModel};
use crate::error::{Error, Result};

fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// `|H(f)|` of a tap set at sample rate `fs`.
pub fn magnitude_response(taps: &[f64], freq_hz: f64, fs: f64) -> f64 {
    let w = 2.0 * PI * freq_hz / fs;
    let (re, im) = taps
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(re, im), (k, &h)| {
            let phase = w * k as f64;
            (re + h * phase.cos(), im - h * phase.sin())
        });
    re.hypot(im)
}

/// Hamming-windowed band-pass with unit gain at `center`.
fn band_pass(edges: (f64, f64), center: f64, fs: f64, taps: usize) -> Vec<f64> {
    let (f1, f2) = (edges.0 / fs, edges.1 / fs);
    let mid = (taps - 1) as f64 / 2.0;
    let raw: Vec<f64> = hamming(taps)
        .iter()
        .enumerate()
        .map(|(n, w)| {
            let m = n as f64 - mid;
            w * (2.0 * f2 * sinc(2.0 * f2 * m) - 2.0 * f1 * sinc(2.0 * f1 * m))
        })
        .collect();
    let gain = magnitude_response(&raw, center, fs);
    raw.iter().map(|h| h / gain).collect()
}

/// Half-band anti-alias low-pass (cutoff at a quarter of the input rate),
/// normalized to unit DC gain.
fn half_band_low_pass(taps: usize) -> Vec<f64> {
    let mid = (taps - 1) as f64 / 2.0;
    let raw: Vec<f64> = hamming(taps)
        .iter()
        .enumerate()
        .map(|(n, w)| w * 0.5 * sinc(0.5 * (n as f64 - mid)))
        .collect();
    let dc: f64 = raw.iter().sum();
    raw.iter().map(|h| h / dc).collect()
}

fn center_frequencies(config: &FilterBankConfig) -> Vec<f64> {
    let gw = config.greenwood;
    let (lo, hi) = config.freq_range;
    let (u_hi, u_lo) = (gw.place(hi), gw.place(lo));
    let p = config.total_filters;
    if p == 1 {
        return vec![hi];
    }
    (0..p)
        .map(|i| gw.frequency(u_hi + (u_lo - u_hi) * i as f64 / (p - 1) as f64))
        .collect()
}

/// Band edges: Greenwood centers, one common bandwidth per octave equal to the
/// mean center spacing inside that octave.
fn band_edges(config: &FilterBankConfig, centers: &[f64]) -> Vec<(f64, f64)> {
    let per = config.filters_per_octave;
    centers
        .chunks(per)
        .flat_map(|octave| {
            let width = if per > 1 {
                (octave[0] - octave[per - 1]) / (per - 1) as f64
            } else {
                octave[0] / 2.0
            };
            octave
                .iter()
                .map(move |&c| (c - width / 2.0, c + width / 2.0))
        })
        .collect()
}

pub fn design_bank(config: &FilterBankConfig) -> Result<FilterBankModel> {
    config.validate()?;
    let centers = center_frequencies(config);
    let edges = band_edges(config, &centers);
    let octave_of: Vec<usize> = (0..config.total_filters)
        .map(|p| p / config.filters_per_octave)
        .collect();

    let mut bp_coeffs = Vec::with_capacity(config.total_filters);
    for (p, (&center, &(lo, hi))) in centers.iter().zip(&edges).enumerate() {
        let fs = config.octave_rate(octave_of[p]);
        if !(hi < fs / 2.0) {
            return Err(Error::Design {
                filter: p,
                reason: format!(
                    "upper cutoff {hi:.1} Hz is not below the octave Nyquist {:.1} Hz",
                    fs / 2.0
                ),
            });
        }
        if !(lo > 0.0) {
            return Err(Error::Design {
                filter: p,
                reason: format!("lower cutoff {lo:.1} Hz is not positive"),
            });
        }
        bp_coeffs.push(band_pass((lo, hi), center, fs, config.bp_taps));
    }

    let lp = half_band_low_pass(config.lp_taps);
    Ok(FilterBankModel {
        config: config.clone(),
        bp_coeffs,
        lp_coeffs: vec![lp; config.num_octaves - 1],
        center_freqs: centers,
        band_edges: edges,
        octave_of,
    })
}

/// Full-rate band-pass for filter `p` with the same band edges, lengthened by
/// `2^octave` so its resolution matches the decimated design. Used as the
/// reference the octave structure is checked against.
pub fn design_reference_filter(bank: &FilterBankModel, p: usize) -> Vec<f64> {
    let cfg = &bank.config;
    let taps = cfg.bp_taps << bank.octave_of[p];
    band_pass(
        bank.band_edges[p],
        bank.center_freqs[p],
        cfg.base_sample_rate,
        taps,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::FilterBankConfig;

    #[test]
    fn default_bank_shape() {
        let bank = design_bank(&FilterBankConfig::default()).unwrap();
        assert_eq!(bank.bp_coeffs.len(), 30);
        assert!(bank.bp_coeffs.iter().all(|h| h.len() == 16));
        assert_eq!(bank.lp_coeffs.len(), 5);
        assert!(bank.lp_coeffs.iter().all(|h| h.len() == 6));
        assert_eq!(bank.octave_of[0], 0);
        assert_eq!(bank.octave_of[29], 5);
    }

    #[test]
    fn taps_are_symmetric_and_lp_has_unit_dc() {
        let bank = design_bank(&FilterBankConfig::default()).unwrap();
        for h in &bank.bp_coeffs {
            let rev: Vec<f64> = h.iter().rev().copied().collect();
            for (a, b) in h.iter().zip(&rev) {
                assert!((a - b).abs() < 1e-15);
            }
        }
        for lp in &bank.lp_coeffs {
            assert!((lp.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn centers_descend_and_follow_greenwood() {
        let cfg = FilterBankConfig::default();
        let bank = design_bank(&cfg).unwrap();
        assert!(bank.center_freqs.windows(2).all(|w| w[0] > w[1]));
        assert!((bank.center_freqs[0] - cfg.freq_range.1).abs() < 1e-9);
        assert!((bank.center_freqs[29] - cfg.freq_range.0).abs() < 1e-9);
        let places: Vec<f64> = bank
            .center_freqs
            .iter()
            .map(|&f| cfg.greenwood.place(f))
            .collect();
        let step = places[1] - places[0];
        for w in places.windows(2) {
            assert!((w[1] - w[0] - step).abs() < 1e-12);
        }
    }

    #[test]
    fn highest_filter_peaks_at_center() {
        let bank = design_bank(&FilterBankConfig::default()).unwrap();
        let fs = bank.config.octave_rate(0);
        let h = &bank.bp_coeffs[0];
        let fc = bank.center_freqs[0];
        let at = |f: f64| magnitude_response(h, f, fs);
        assert!((at(fc) - 1.0).abs() < 1e-12);
        assert!(at(fc) >= at(fc / 2.0));
        assert!(at(fc) >= at((2.0 * fc).min(fs / 2.0)));
    }

    #[test]
    fn infeasible_config_names_filter() {
        let cfg = FilterBankConfig {
            freq_range: (200.0, 7000.0),
            ..FilterBankConfig::default()
        };
        match design_bank(&cfg) {
            Err(Error::Design { filter, .. }) => assert!(filter >= 5, "filter {filter}"),
            other => panic!("expected design error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_config_fields() {
        let bad = FilterBankConfig {
            total_filters: 29,
            ..FilterBankConfig::default()
        };
        assert!(matches!(design_bank(&bad), Err(Error::Config { field, .. }) if field == "total_filters"));
        let bad = FilterBankConfig {
            freq_range: (100.0, 8000.0),
            ..FilterBankConfig::default()
        };
        assert!(matches!(design_bank(&bad), Err(Error::Config { field, .. }) if field == "freq_range"));
    }

    #[test]
    fn reference_filter_is_longer_for_low_octaves() {
        let bank = design_bank(&FilterBankConfig::default()).unwrap();
        assert_eq!(design_reference_filter(&bank, 0).len(), 16);
        assert_eq!(design_reference_filter(&bank, 29).len(), 16 * 32);
    }
}
