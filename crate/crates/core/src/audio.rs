//! WAV input/output, resampling, silence trimming, segmentation and
//! one-vs-all dataset assembly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rubato::{FftFixedIn, Resampler};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::{LabeledClip, LabeledDataset, Split};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub rate: u32,
    pub source: String,
    pub label: Option<String>,
}

/// Decode a PCM WAV file and average its channels to mono in `[-1, 1]`.
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
    };
    let samples = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok(AudioClip {
        samples,
        rate: spec.sample_rate,
        source: path.display().to_string(),
        label: None,
    })
}

/// Write mono 16-bit PCM, clipping to full scale.
pub fn write_wav(path: &Path, samples: &[f64], rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}

/// Band-limited resampling; the output has `round(len · to / from)` samples
/// and is aligned with the input (the resampler delay is removed).
pub fn resample(x: &[f64], from: u32, to: u32) -> Result<Vec<f64>> {
    if from == 0 || to == 0 {
        return Err(Error::Dataset(format!("invalid sample rates {from} -> {to}")));
    }
    if from == to || x.is_empty() {
        return Ok(x.to_vec());
    }
    let fail = |e: &dyn std::fmt::Display| Error::Dataset(format!("resampling failed: {e}"));
    let mut rs = FftFixedIn::<f64>::new(from as usize, to as usize, 1024, 2, 1).map_err(|e| fail(&e))?;
    let expected = (x.len() as f64 * to as f64 / from as f64).round() as usize;
    let delay = rs.output_delay();
    let mut out: Vec<f64> = Vec::with_capacity(expected + delay + 2048);
    let mut pos = 0;
    while x.len() - pos >= rs.input_frames_next() {
        let n = rs.input_frames_next();
        let block = rs.process(&[&x[pos..pos + n]], None).map_err(|e| fail(&e))?;
        out.extend_from_slice(&block[0]);
        pos += n;
    }
    if pos < x.len() {
        let block = rs
            .process_partial(Some(&[&x[pos..]]), None)
            .map_err(|e| fail(&e))?;
        out.extend_from_slice(&block[0]);
    }
    while out.len() < expected + delay {
        let block = rs.process_partial::<&[f64]>(None, None).map_err(|e| fail(&e))?;
        out.extend_from_slice(&block[0]);
    }
    Ok(out[delay..delay + expected].to_vec())
}

/// Bounds `[start, end)` of the region between the first and last analysis
/// window whose RMS reaches `threshold` times the clip peak.
pub fn silence_bounds(x: &[f64], rate: u32, window_ms: f64, threshold: f64) -> (usize, usize) {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return (0, 0);
    }
    let win = ((rate as f64 * window_ms / 1000.0).round() as usize).max(1);
    let loud: Vec<bool> = x
        .chunks(win)
        .map(|w| (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt() >= threshold * peak)
        .collect();
    match (loud.iter().position(|&l| l), loud.iter().rposition(|&l| l)) {
        (Some(a), Some(b)) => (a * win, ((b + 1) * win).min(x.len())),
        _ => (0, 0),
    }
}

/// Cut into consecutive segments of `len` samples. A clip shorter than one
/// segment is zero-padded to one; a trailing remainder of at least half a
/// segment is zero-padded, shorter remainders are dropped.
pub fn segment(x: &[f64], len: usize) -> Vec<Vec<f64>> {
    if x.is_empty() || len == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for chunk in x.chunks(len) {
        if chunk.len() == len || out.is_empty() || 2 * chunk.len() >= len {
            let mut seg = chunk.to_vec();
            seg.resize(len, 0.0);
            out.push(seg);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestOptions {
    pub target_rate: u32,
    pub segment_seconds: f64,
    pub trim_window_ms: f64,
    /// Fraction of the clip peak below which a window counts as silence.
    pub trim_threshold: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            target_rate: 16000,
            segment_seconds: 1.0,
            trim_window_ms: 20.0,
            trim_threshold: 0.02,
        }
    }
}

/// Decode, mix down, resample, trim and segment one recording.
pub fn prepare_clip(clip: &AudioClip, opts: &IngestOptions) -> Result<Vec<Vec<f64>>> {
    let x = resample(&clip.samples, clip.rate, opts.target_rate)?;
    let (a, b) = silence_bounds(&x, opts.target_rate, opts.trim_window_ms, opts.trim_threshold);
    let len = (opts.segment_seconds * opts.target_rate as f64).round() as usize;
    Ok(segment(&x[a..b], len))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub class: String,
    pub source: String,
    pub samples: Vec<f64>,
}

/// Segments of every class at a common rate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub rate: u32,
    pub segments: Vec<Segment>,
}

pub const MANIFEST_CSV_HEADER: &str = "id,class,source,path";

/// How the balanced one-vs-all set is divided.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPlan {
    /// Fraction of clips used for training.
    Fraction(f64),
    /// Exact train and test totals.
    Counts { train: usize, test: usize },
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan::Fraction(0.8)
    }
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Ingest a tree of per-class directories of WAV files. Unreadable files are
/// skipped with a warning; a class without any usable segment is an error.
pub fn ingest(root: &Path, opts: &IngestOptions) -> Result<Corpus> {
    let mut classes: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    classes.sort();
    if classes.is_empty() {
        return Err(Error::Dataset(format!("no class directories under {}", root.display())));
    }
    let mut corpus = Corpus {
        rate: opts.target_rate,
        segments: Vec::new(),
    };
    for dir in classes {
        let class = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let before = corpus.segments.len();
        for file in wav_files(&dir)? {
            let clip = match read_wav(&file) {
                Ok(c) => c,
                Err(e) => {
                    log::warn!("skipping {}: {e}", file.display());
                    continue;
                }
            };
            let stem = file
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            for (k, samples) in prepare_clip(&clip, opts)?.into_iter().enumerate() {
                corpus.segments.push(Segment {
                    id: format!("{class}/{stem}#{k}"),
                    class: class.clone(),
                    source: file.display().to_string(),
                    samples,
                });
            }
        }
        if corpus.segments.len() == before {
            return Err(Error::Dataset(format!("class {class:?} has no usable audio")));
        }
    }
    Ok(corpus)
}

impl Corpus {
    pub fn classes(&self) -> Vec<String> {
        let mut c: Vec<String> = self.segments.iter().map(|s| s.class.clone()).collect();
        c.sort();
        c.dedup();
        c
    }

    pub fn class_counts(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for s in &self.segments {
            *m.entry(s.class.clone()).or_insert(0) += 1;
        }
        m
    }

    /// Balanced target-versus-rest dataset: every target segment, an equal
    /// number of segments drawn from the other classes, a seeded shuffle and
    /// a split stratified by label.
    pub fn one_vs_all(&self, target: &str, seed: u64, plan: SplitPlan) -> Result<LabeledDataset> {
        let mut pos: Vec<&Segment> = self.segments.iter().filter(|s| s.class == target).collect();
        let mut neg: Vec<&Segment> = self.segments.iter().filter(|s| s.class != target).collect();
        if pos.is_empty() {
            return Err(Error::Dataset(format!("class {target:?} has no segments")));
        }
        if neg.is_empty() {
            return Err(Error::Dataset("no segments outside the target class".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        // (train, test) clips per label
        let (pos_n, neg_n) = match plan {
            SplitPlan::Fraction(f) => {
                if !(f > 0.0 && f < 1.0) {
                    return Err(Error::Config {
                        field: "split".into(),
                        reason: format!("train fraction must lie in (0, 1), got {f}"),
                    });
                }
                let n = pos.len().min(neg.len());
                let k = (n as f64 * f).round() as usize;
                ((k, n - k), (k, n - k))
            }
            SplitPlan::Counts { train, test } => {
                ((train.div_ceil(2), test.div_ceil(2)), (train / 2, test / 2))
            }
        };
        if pos.len() < pos_n.0 + pos_n.1 || neg.len() < neg_n.0 + neg_n.1 {
            return Err(Error::Dataset(format!(
                "split needs {} target and {} other clips, have {} and {}",
                pos_n.0 + pos_n.1,
                neg_n.0 + neg_n.1,
                pos.len(),
                neg.len()
            )));
        }
        let mut clips = Vec::new();
        let mut take = |segs: &[&Segment], label: bool, (n_train, n_test): (usize, usize)| {
            for (i, s) in segs.iter().take(n_train + n_test).enumerate() {
                clips.push(LabeledClip {
                    id: s.id.clone(),
                    samples: s.samples.clone(),
                    label,
                    split: if i < n_train { Split::Train } else { Split::Test },
                });
            }
        };
        take(&pos, true, pos_n);
        take(&neg, false, neg_n);
        clips.shuffle(&mut rng);
        Ok(LabeledDataset { clips })
    }

    /// Write every segment as PCM16 and a manifest listing them.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let mut manifest = String::from(MANIFEST_CSV_HEADER);
        manifest.push('\n');
        for (i, s) in self.segments.iter().enumerate() {
            let name = format!("{i:06}.wav");
            write_wav(&dir.join(&name), &s.samples, self.rate)?;
            manifest.push_str(&format!(
                "{},{},{},{name}\n",
                csv_field(&s.id),
                csv_field(&s.class),
                csv_field(&s.source)
            ));
        }
        let path = dir.join("manifest.csv");
        fs::write(&path, manifest)?;
        Ok(path)
    }

    /// Read a corpus written by [`Corpus::write`].
    pub fn load(manifest: &Path) -> Result<Corpus> {
        let text = fs::read_to_string(manifest)?;
        let dir = manifest.parent().unwrap_or(Path::new("."));
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(MANIFEST_CSV_HEADER) {
            return Err(Error::Dataset(format!("{} is not a manifest", manifest.display())));
        }
        let mut corpus = Corpus::default();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let cols = split_csv(line);
            if cols.len() != 4 {
                return Err(Error::Dataset(format!("malformed manifest row {line:?}")));
            }
            let clip = read_wav(&dir.join(&cols[3]))?;
            if corpus.rate != 0 && corpus.rate != clip.rate {
                return Err(Error::Dataset("manifest mixes sample rates".into()));
            }
            corpus.rate = clip.rate;
            corpus.segments.push(Segment {
                id: cols[0].clone(),
                class: cols[1].clone(),
                source: cols[2].clone(),
                samples: clip.samples,
            });
        }
        Ok(corpus)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn split_csv(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(freq: f64, rate: u32, secs: f64, amp: f64) -> Vec<f64> {
        let n = (rate as f64 * secs) as usize;
        (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / rate as f64).sin())
            .collect()
    }

    #[test]
    fn resample_length_and_content() {
        let x = tone(440.0, 44100, 1.0, 0.5);
        let y = resample(&x, 44100, 16000).unwrap();
        assert_eq!(y.len(), 16000);
        let reference = tone(440.0, 16000, 1.0, 0.5);
        let err = y[1000..15000]
            .iter()
            .zip(&reference[1000..15000])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.01, "max error {err}");
    }

    #[test]
    fn trimming_and_segmenting_a_padded_clip() {
        let rate = 16000;
        let mut x = vec![0.0; 16000];
        x.extend(tone(300.0, rate, 3.0, 0.5));
        x.extend(vec![0.0; 16000]);
        let (a, b) = silence_bounds(&x, rate, 20.0, 0.02);
        assert!((15680..=16000).contains(&a));
        assert!((64000..=64320).contains(&b));
        assert!(segment(&x[a..b], 16000).len() >= 3);
    }

    #[test]
    fn short_clip_is_padded_to_one_segment() {
        let s = segment(&[0.5; 5000], 16000);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].len(), 16000);
        assert_eq!(segment(&[0.5; 16000 + 7000], 16000).len(), 1);
        assert_eq!(segment(&[0.5; 16000 + 9000], 16000).len(), 2);
        assert!(segment(&[], 16000).is_empty());
    }

    #[test]
    fn stereo_44k_ingests_to_16k_mono() {
        let dir = tempfile::tempdir().unwrap();
        let class = dir.path().join("tone");
        fs::create_dir(&class).unwrap();
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 44100,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(class.join("a.wav"), spec).unwrap();
        for v in tone(500.0, 44100, 2.0, 0.4) {
            let s = (v * 32767.0) as i16;
            w.write_sample(s).unwrap();
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
        fs::write(class.join("broken.wav"), b"not audio").unwrap();
        let corpus = ingest(dir.path(), &IngestOptions::default()).unwrap();
        assert_eq!(corpus.segments.len(), 2);
        assert!(corpus.segments.iter().all(|s| s.samples.len() == 16000));
        assert_eq!(corpus.rate, 16000);
    }

    #[test]
    fn empty_class_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("empty")).unwrap();
        assert!(matches!(ingest(dir.path(), &IngestOptions::default()), Err(Error::Dataset(_))));
    }

    fn toy_corpus() -> Corpus {
        let mut segments = Vec::new();
        for (class, n) in [("dog", 30), ("rain", 20), ("clock", 25)] {
            for i in 0..n {
                segments.push(Segment {
                    id: format!("{class}/{i}"),
                    class: class.into(),
                    source: format!("{class}_{i}.wav"),
                    samples: vec![i as f64 / 100.0; 8],
                });
            }
        }
        Corpus {
            rate: 16000,
            segments,
        }
    }

    #[test]
    fn one_vs_all_is_balanced_split_and_seeded() {
        let c = toy_corpus();
        let d = c.one_vs_all("dog", 1, SplitPlan::Fraction(0.8)).unwrap();
        assert_eq!(d.clips.len(), 60);
        assert_eq!(d.clips.iter().filter(|c| c.label).count(), 30);
        assert_eq!(d.count(Split::Train), 48);
        assert_eq!(d.split(Split::Test).filter(|c| c.label).count(), 6);
        assert_eq!(d, c.one_vs_all("dog", 1, SplitPlan::Fraction(0.8)).unwrap());
        assert_ne!(d, c.one_vs_all("dog", 2, SplitPlan::Fraction(0.8)).unwrap());
        let d = c
            .one_vs_all("dog", 1, SplitPlan::Counts { train: 41, test: 11 })
            .unwrap();
        assert_eq!((d.count(Split::Train), d.count(Split::Test)), (41, 11));
        assert!(c.one_vs_all("cat", 1, SplitPlan::default()).is_err());
    }

    #[test]
    fn corpus_round_trips_through_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = toy_corpus();
        c.segments.truncate(3);
        c.segments[0].source = "odd, \"name\".wav".into();
        let path = c.write(dir.path()).unwrap();
        let back = Corpus::load(&path).unwrap();
        assert_eq!(back.segments.len(), 3);
        assert_eq!(back.segments[0].source, c.segments[0].source);
        for (a, b) in back.segments.iter().zip(&c.segments) {
            for (u, v) in a.samples.iter().zip(&b.samples) {
                assert!((u - v).abs() <= 0.5 / 32768.0 + 1e-12);
            }
        }
    }
}
