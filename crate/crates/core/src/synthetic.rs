//! Parametric stand-ins for environmental-sound and spoken-digit corpora,
//! used when the recorded datasets are not available.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::{Corpus, Segment};

pub const RATE: u32 = 16000;
const N: usize = RATE as usize;

pub const ENVIRONMENT_CLASSES: [&str; 10] = [
    "dog",
    "rooster",
    "rain",
    "sea_waves",
    "crackling_fire",
    "crying_baby",
    "sneezing",
    "clock_tick",
    "helicopter",
    "chainsaw",
];

pub const SPEAKERS: [&str; 6] = ["george", "jackson", "lucas", "nicolas", "theo", "yweweler"];

fn white(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// One-pole low-pass with cutoff `fc`.
fn low_pass(x: &[f64], fc: f64) -> Vec<f64> {
    let a = (-2.0 * PI * fc / RATE as f64).exp();
    let mut y = 0.0;
    x.iter()
        .map(|v| {
            y = (1.0 - a) * v + a * y;
            y
        })
        .collect()
}

fn high_pass(x: &[f64], fc: f64) -> Vec<f64> {
    let lp = low_pass(x, fc);
    x.iter().zip(&lp).map(|(a, b)| a - b).collect()
}

/// Two-pole resonator at `freq` with bandwidth `bw`, normalized to unit
/// peak gain.
fn resonate(x: &[f64], freq: f64, bw: f64) -> Vec<f64> {
    let r = (-PI * bw / RATE as f64).exp();
    let theta = 2.0 * PI * freq / RATE as f64;
    let (c1, c2) = (2.0 * r * theta.cos(), -r * r);
    let gain = 1.0 - r;
    let (mut y1, mut y2) = (0.0, 0.0);
    x.iter()
        .map(|v| {
            let y = gain * v + c1 * y1 + c2 * y2;
            y2 = y1;
            y1 = y;
            y
        })
        .collect()
}

fn normalize(x: &mut [f64], peak: f64) {
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / m);
    }
}

/// Harmonic tone with per-sample fundamental `f0(t)` and amplitude
/// `env(t)`; harmonic `k` has weight `rolloff^(k-1)`.
fn harmonic(
    rng: &mut impl Rng,
    n: usize,
    harmonics: usize,
    rolloff: f64,
    f0: impl Fn(f64) -> f64,
    env: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let mut phase = rng.gen_range(0.0..2.0 * PI);
    (0..n)
        .map(|i| {
            let t = i as f64 / RATE as f64;
            let f = f0(t);
            phase += 2.0 * PI * f / RATE as f64;
            let mut s = 0.0;
            let mut w = 1.0;
            for k in 1..=harmonics {
                if f * k as f64 >= 0.45 * RATE as f64 {
                    break;
                }
                s += w * (k as f64 * phase).sin();
                w *= rolloff;
            }
            s * env(t)
        })
        .collect()
}

fn add_at(dst: &mut [f64], src: &[f64], start: usize) {
    for (d, s) in dst.iter_mut().skip(start).zip(src) {
        *d += s;
    }
}

fn burst_env(t: f64, start: f64, len: f64) -> f64 {
    if t < start || t > start + len {
        0.0
    } else {
        let u = (t - start) / len;
        (PI * u).sin().powf(0.5) * (-2.0 * u).exp()
    }
}

fn environment_clip(class: &str, rng: &mut impl Rng) -> Vec<f64> {
    let mut x = vec![0.0; N];
    match class {
        "dog" => {
            for _ in 0..rng.gen_range(1..=3) {
                let f = rng.gen_range(450.0..800.0);
                let start = rng.gen_range(0.0..0.75);
                let len = rng.gen_range(0.08..0.2);
                let bark = harmonic(rng, N, 8, 0.7, |t| f * (1.0 - 0.3 * t), |t| burst_env(t, start, len));
                add_at(&mut x, &bark, 0);
            }
        }
        "rooster" => {
            let f = rng.gen_range(550.0..900.0);
            let len = rng.gen_range(0.5..0.9);
            let start = rng.gen_range(0.0..(1.0 - len));
            x = harmonic(
                rng,
                N,
                6,
                0.6,
                |t| f * (1.0 + 0.4 * (PI * ((t - start) / len).clamp(0.0, 1.0)).sin()),
                |t| if t >= start && t <= start + len { 1.0 } else { 0.0 },
            );
        }
        "rain" => {
            let band = rng.gen_range(1500.0..3500.0);
            x = high_pass(&white(rng, N), band);
            for _ in 0..rng.gen_range(20..60) {
                let at = rng.gen_range(0..N - 200);
                let drop = resonate(&[1.0; 1], rng.gen_range(2000.0..5000.0), 300.0);
                x[at] += 4.0 * drop[0];
            }
        }
        "sea_waves" => {
            let rate = rng.gen_range(0.3..0.8);
            let ph = rng.gen_range(0.0..2.0 * PI);
            let lp = low_pass(&white(rng, N), rng.gen_range(300.0..900.0));
            x = lp
                .iter()
                .enumerate()
                .map(|(i, v)| v * (0.6 + 0.4 * (2.0 * PI * rate * i as f64 / RATE as f64 + ph).sin()))
                .collect();
        }
        "crackling_fire" => {
            x = low_pass(&white(rng, N), 600.0).iter().map(|v| 0.2 * v).collect();
            for _ in 0..rng.gen_range(15..50) {
                let at = rng.gen_range(0..N - 400);
                let mut imp = vec![0.0; 400];
                imp[0] = rng.gen_range(0.5..1.0);
                let click = resonate(&imp, rng.gen_range(800.0..6000.0), 800.0);
                add_at(&mut x, &click, at);
            }
        }
        "crying_baby" => {
            let f = rng.gen_range(380.0..520.0);
            let vib = rng.gen_range(4.0..7.0);
            let len = rng.gen_range(0.6..0.95);
            let start = rng.gen_range(0.0..(1.0 - len));
            let tone = harmonic(
                rng,
                N,
                10,
                0.8,
                |t| f * (1.0 + 0.04 * (2.0 * PI * vib * t).sin()),
                |t| if t >= start && t <= start + len { 1.0 } else { 0.0 },
            );
            let formant = resonate(&tone, rng.gen_range(1000.0..1600.0), 400.0);
            x = tone.iter().zip(&formant).map(|(a, b)| 0.4 * a + 4.0 * b).collect();
        }
        "sneezing" => {
            let start = rng.gen_range(0.05..0.6);
            let len = rng.gen_range(0.2..0.35);
            let noise = high_pass(&white(rng, N), 1200.0);
            let f = rng.gen_range(250.0..400.0);
            let onset = harmonic(rng, N, 5, 0.6, |_| f, |t| burst_env(t, start - 0.05, 0.12));
            for i in 0..N {
                let t = i as f64 / RATE as f64;
                x[i] = noise[i] * burst_env(t, start, len) + onset[i];
            }
        }
        "clock_tick" => {
            let period = rng.gen_range(0.2..0.5);
            let offset = rng.gen_range(0.0..period);
            let freq = rng.gen_range(2000.0..4500.0);
            let mut t = offset;
            while t < 1.0 {
                let at = (t * RATE as f64) as usize;
                let mut imp = vec![0.0; 600.min(N - at)];
                if !imp.is_empty() {
                    imp[0] = 1.0;
                    add_at(&mut x, &resonate(&imp, freq, 150.0), at);
                }
                t += period;
            }
        }
        "helicopter" => {
            let blade = rng.gen_range(12.0..25.0);
            let f = rng.gen_range(70.0..160.0);
            let tone = harmonic(rng, N, 12, 0.85, |_| f, |_| 1.0);
            let noise = low_pass(&white(rng, N), 1500.0);
            x = (0..N)
                .map(|i| {
                    let t = i as f64 / RATE as f64;
                    let am = 0.5 + 0.5 * (2.0 * PI * blade * t).sin().max(0.0);
                    am * (0.5 * tone[i] + noise[i])
                })
                .collect();
        }
        "chainsaw" => {
            let f = rng.gen_range(90.0..160.0);
            let drift = rng.gen_range(-0.2..0.2);
            let tone = harmonic(rng, N, 40, 0.93, |t| f * (1.0 + drift * t), |_| 1.0);
            let noise = high_pass(&white(rng, N), 2000.0);
            x = tone.iter().zip(&noise).map(|(a, b)| a + 0.3 * b).collect();
        }
        other => panic!("unknown class {other}"),
    }
    x
}

/// Mix `x` at a random level with background noise at a random SNR.
fn finish(mut x: Vec<f64>, rng: &mut impl Rng, snr_db: (f64, f64)) -> Vec<f64> {
    normalize(&mut x, 1.0);
    let sig_rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    let snr = rng.gen_range(snr_db.0..snr_db.1);
    let mut noise = low_pass(&white(rng, x.len()), rng.gen_range(500.0..6000.0));
    let noise_rms = (noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64).sqrt();
    let scale = sig_rms / noise_rms.max(1e-12) * 10f64.powf(-snr / 20.0);
    noise.iter_mut().for_each(|v| *v *= scale);
    let mut y: Vec<f64> = x.iter().zip(&noise).map(|(a, b)| a + b).collect();
    normalize(&mut y, rng.gen_range(0.2..0.9));
    y
}

/// Ten-class environmental corpus of one-second clips.
pub fn environment_corpus(clips_per_class: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut segments = Vec::with_capacity(clips_per_class * ENVIRONMENT_CLASSES.len());
    for class in ENVIRONMENT_CLASSES {
        for i in 0..clips_per_class {
            let raw = environment_clip(class, &mut rng);
            segments.push(Segment {
                id: format!("{class}/{i}"),
                class: class.to_string(),
                source: format!("synthetic:{class}:{i}"),
                samples: finish(raw, &mut rng, (0.0, 20.0)),
            });
        }
    }
    Corpus {
        rate: RATE,
        segments,
    }
}

/// Formant frequencies (F1, F2, F3) of each digit's vowel nucleus.
const DIGIT_FORMANTS: [(f64, f64, f64); 10] = [
    (450.0, 1900.0, 2600.0),
    (600.0, 1000.0, 2400.0),
    (350.0, 900.0, 2300.0),
    (400.0, 2100.0, 2700.0),
    (550.0, 850.0, 2400.0),
    (700.0, 1700.0, 2500.0),
    (450.0, 2000.0, 2650.0),
    (550.0, 1750.0, 2500.0),
    (500.0, 2000.0, 2700.0),
    (650.0, 1300.0, 2450.0),
];

/// `(f0, vocal-tract scale)` of each speaker.
const SPEAKER_VOICE: [(f64, f64); 6] = [
    (110.0, 1.0),
    (125.0, 0.95),
    (100.0, 1.05),
    (140.0, 0.9),
    (118.0, 1.0),
    (105.0, 0.97),
];

fn utterance(speaker: usize, digit: usize, rng: &mut impl Rng) -> Vec<f64> {
    let (f0, scale) = SPEAKER_VOICE[speaker];
    let f0 = f0 * rng.gen_range(0.92..1.08);
    let len = rng.gen_range(0.3..0.6);
    let start = rng.gen_range(0.05..(0.95 - len));
    let (f1, f2, f3) = DIGIT_FORMANTS[digit];
    let jitter = rng.gen_range(0.95..1.05);
    let source = harmonic(
        rng,
        N,
        40,
        0.9,
        |t| f0 * (1.0 - 0.1 * ((t - start) / len).clamp(0.0, 1.0)),
        |t| burst_env(t, start, len).min(1.0),
    );
    let mut y = vec![0.0; N];
    for (f, bw, g) in [(f1, 90.0, 1.0), (f2, 120.0, 0.6), (f3, 160.0, 0.3)] {
        let r = resonate(&source, f * scale * jitter, bw);
        y.iter_mut().zip(&r).for_each(|(a, b)| *a += g * b);
    }
    y
}

/// Six-speaker, ten-digit corpus; each class is a speaker.
pub fn spoken_digit_corpus(repetitions: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut segments = Vec::new();
    for (s, name) in SPEAKERS.iter().enumerate() {
        for digit in 0..10 {
            for r in 0..repetitions {
                let raw = utterance(s, digit, &mut rng);
                segments.push(Segment {
                    id: format!("{name}/{digit}_{r}"),
                    class: name.to_string(),
                    source: format!("synthetic:{name}:{digit}:{r}"),
                    samples: finish(raw, &mut rng, (15.0, 30.0)),
                });
            }
        }
    }
    Corpus {
        rate: RATE,
        segments,
    }
}
