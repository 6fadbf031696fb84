use super::FilterMode;
use crate::error::{domain, Result};
use crate::mp::MpWorkspace;

/// Direct-form convolution `y(n) = Σ_k h(k) x(n − k)` with zero history.
pub fn fir_exact(x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    if h.is_empty() {
        return domain("FIR needs at least one tap");
    }
    Ok((0..x.len())
        .map(|n| {
            h.iter()
                .take(n + 1)
                .enumerate()
                .map(|(k, hk)| hk * x[n - k])
                .sum()
        })
        .collect())
}

/// FIR filter whose every output is an MP inner product of the taps with the
/// current input window, both carried on `(v, −v)` rails.
pub fn fir_mp(x: &[f64], h: &[f64], gamma_f: f64) -> Result<Vec<f64>> {
    if h.is_empty() {
        return domain("FIR needs at least one tap");
    }
    if !(gamma_f > 0.0) {
        return domain(format!("gamma_f must be > 0, got {gamma_f}"));
    }
    let m = h.len();
    let h_minus: Vec<f64> = h.iter().map(|v| -v).collect();
    let mut ws = MpWorkspace::default();
    let mut window = vec![0.0; m];
    let mut window_minus = vec![0.0; m];
    let mut y = Vec::with_capacity(x.len());
    for &sample in x {
        // window[k] = x(n − k)
        window.rotate_right(1);
        window_minus.rotate_right(1);
        window[0] = sample;
        window_minus[0] = -sample;
        y.push(ws.inner_product(h, &h_minus, &window, &window_minus, gamma_f));
    }
    Ok(y)
}

pub(crate) fn run_fir(x: &[f64], h: &[f64], mode: FilterMode) -> Result<Vec<f64>> {
    match mode {
        FilterMode::Exact => fir_exact(x, h),
        FilterMode::Mp { gamma_f } => fir_mp(x, h, gamma_f),
    }
}

/// Low-pass filter then keep every second sample; output length is
/// `ceil(len / 2)`.
pub fn decimate(x: &[f64], lp: &[f64], mode: FilterMode) -> Result<Vec<f64>> {
    Ok(run_fir(x, lp, mode)?.into_iter().step_by(2).collect())
}

/// Half-wave rectification.
pub fn hwr(q: f64) -> f64 {
    q.max(0.0)
}

pub fn accumulate(d: &[f64]) -> f64 {
    d.iter().sum()
}
