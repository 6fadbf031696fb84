mod report;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use infilter_core::audio::{ingest, prepare_clip, read_wav, Corpus, IngestOptions, SplitPlan};
use infilter_core::chirp::{chirp_response, Chirp, SweepKind};
use infilter_core::filterbank::{design_bank, FilterBankConfig, FilterBankModel, FilterMode};
use infilter_core::fixedpoint::{audit, run_fixed, DatapathConfig, OpTrace};
use infilter_core::kernel_machine::{infer, InferMode, TrainedModel, DECISION_CSV_HEADER};
use infilter_core::model_file::{load_model, save_model};
use infilter_core::synthetic::{environment_corpus, spoken_digit_corpus};
use infilter_core::trainer::{
    bitwidth_sweep, evaluate, geometric_schedule, quantize_model, train, write_sweep_csv,
    write_training_log, LabeledDataset, Split, TrainConfig,
};
use infilter_core::Error;

use report::Report;

/// In-filter acoustic classification with margin propagation.
#[derive(Parser)]
#[command(name = "infilter", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design the octave filter bank and write it as JSON.
    DesignBank(DesignBankArgs),
    /// Turn per-class WAV directories into 1-second segments and a manifest.
    Ingest(IngestArgs),
    /// Train a one-vs-all classifier on an ingested corpus.
    Train(TrainArgs),
    /// Classify clips with a trained model.
    Infer(InferArgs),
    /// Quantize a model's parameters to a storage width.
    Quantize(QuantizeArgs),
    /// Retrain and evaluate at several storage widths.
    SweepBits(SweepArgs),
    /// Gain of every filter over time for a swept sine.
    ChirpResponse(ChirpArgs),
    /// Check an operation trace for multiplies.
    Audit(AuditArgs),
}

#[derive(Args)]
struct BankArgs {
    /// Filter bank JSON written by `design-bank`.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Filter bank configuration JSON (fields may be omitted).
    #[arg(long)]
    bank_config: Option<PathBuf>,
}

impl BankArgs {
    fn load(&self) -> Result<FilterBankModel> {
        if let Some(path) = &self.bank {
            return read_json(path);
        }
        let config: FilterBankConfig = match &self.bank_config {
            Some(path) => read_json(path)?,
            None => FilterBankConfig::default(),
        };
        Ok(design_bank(&config)?)
    }
}

#[derive(Args)]
struct DesignBankArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    f_low: Option<f64>,
    #[arg(long)]
    f_high: Option<f64>,
    #[arg(long)]
    input_shift: Option<u32>,
    #[arg(long)]
    out: PathBuf,
    /// Per-filter summary CSV.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SyntheticKind {
    Environment,
    Digits,
}

#[derive(Args)]
struct IngestArgs {
    /// Directory holding one sub-directory of WAV files per class.
    #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    /// Generate a synthetic corpus instead of reading WAV files.
    #[arg(long, value_enum)]
    synthetic: Option<SyntheticKind>,
    /// Clips per class (environment) or repetitions per digit (digits).
    #[arg(long, default_value_t = 40)]
    clips: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Manifest written by `ingest`.
    #[arg(long)]
    manifest: PathBuf,
    /// Positive class; every other class is pooled as negative.
    #[arg(long)]
    target: String,
    /// Seed for the class balancing and the train/test split.
    #[arg(long, default_value_t = 7)]
    split_seed: u64,
    #[arg(long, default_value_t = 0.8, conflicts_with = "split_counts")]
    train_fraction: f64,
    /// Exact totals as TRAIN,TEST.
    #[arg(long)]
    split_counts: Option<String>,
}

impl DataArgs {
    fn plan(&self) -> Result<SplitPlan> {
        match &self.split_counts {
            None => Ok(SplitPlan::Fraction(self.train_fraction)),
            Some(s) => {
                let parts: Vec<&str> = s.split(',').collect();
                let parse = |v: &str| {
                    v.trim().parse::<usize>().map_err(|_| config_error("split_counts", format!("{s:?} is not TRAIN,TEST")))
                };
                if parts.len() != 2 {
                    return Err(config_error("split_counts", format!("{s:?} is not TRAIN,TEST")).into());
                }
                Ok(SplitPlan::Counts {
                    train: parse(parts[0])?,
                    test: parse(parts[1])?,
                })
            }
        }
    }

    fn load(&self) -> Result<LabeledDataset> {
        let corpus = Corpus::load(&self.manifest)
            .with_context(|| format!("loading {}", self.manifest.display()))?;
        Ok(corpus.one_vs_all(&self.target, self.split_seed, self.plan()?)?)
    }
}

#[derive(Args)]
struct TrainFlags {
    /// Training configuration JSON (fields may be omitted).
    #[arg(long)]
    train_config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    gamma_f: Option<f64>,
    /// γ₁ at the first epoch of a geometric schedule.
    #[arg(long, requires = "gamma1_end", conflicts_with = "gamma1_schedule")]
    gamma1_start: Option<f64>,
    /// γ₁ at the last epoch of a geometric schedule.
    #[arg(long, requires = "gamma1_start")]
    gamma1_end: Option<f64>,
    /// Explicit breakpoints as EPOCH:GAMMA,EPOCH:GAMMA,...
    #[arg(long)]
    gamma1_schedule: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fake-quantize parameters to `--bits` during training.
    #[arg(long)]
    quant_aware: bool,
    #[arg(long)]
    bits: Option<u32>,
}

impl TrainFlags {
    fn config(&self) -> Result<TrainConfig> {
        let mut cfg: TrainConfig = match &self.train_config {
            Some(path) => read_json(path)?,
            None => TrainConfig::default(),
        };
        let schedule_epochs_changed = self.epochs.is_some_and(|e| e != cfg.epochs);
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.gamma_f {
            cfg.gamma_f = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.bits {
            cfg.bits = v;
        }
        cfg.quant_aware |= self.quant_aware;
        if let (Some(a), Some(b)) = (self.gamma1_start, self.gamma1_end) {
            cfg.gamma1_schedule = geometric_schedule(a, b, cfg.epochs);
        } else if let Some(s) = &self.gamma1_schedule {
            cfg.gamma1_schedule = parse_schedule(s)?;
        } else if schedule_epochs_changed && self.train_config.is_none() {
            cfg.gamma1_schedule = geometric_schedule(2.0, 0.5, cfg.epochs);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_schedule(s: &str) -> Result<Vec<(usize, f64)>> {
    s.split(',')
        .map(|pair| {
            let (e, g) = pair
                .split_once(':')
                .ok_or_else(|| config_error("gamma1_schedule", format!("{pair:?} is not EPOCH:GAMMA")))?;
            let e = e
                .trim()
                .parse()
                .map_err(|_| config_error("gamma1_schedule", format!("bad epoch {e:?}")))?;
            let g = g
                .trim()
                .parse()
                .map_err(|_| config_error("gamma1_schedule", format!("bad margin {g:?}")))?;
            Ok((e, g))
        })
        .collect()
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    bank: BankArgs,
    #[command(flatten)]
    flags: TrainFlags,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch training log CSV.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "mp")]
    mode: String,
    /// WAV files to classify; each is trimmed and segmented like `ingest`.
    #[arg(conflicts_with = "manifest")]
    wavs: Vec<PathBuf>,
    /// Classify the segments of an ingested corpus instead.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// With a manifest, restrict to the one-vs-all set of this class and
    /// report accuracy.
    #[arg(long, requires = "manifest")]
    target: Option<String>,
    #[arg(long, value_enum, default_value_t = SplitChoice::Test, requires = "target")]
    split: SplitChoice,
    #[arg(long, default_value_t = 7)]
    split_seed: u64,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    /// Storage width used when a float model is run in fixed mode.
    #[arg(long, default_value_t = 8)]
    bits: u32,
    /// Datapath configuration JSON for fixed mode (fields may be omitted).
    #[arg(long)]
    datapath: Option<PathBuf>,
    /// Decision CSV; written to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Operation trace CSV of the fixed-mode run.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitChoice {
    Train,
    Test,
    All,
}

#[derive(Args)]
struct QuantizeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 8)]
    bits: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    bank: BankArgs,
    #[command(flatten)]
    flags: TrainFlags,
    /// Storage widths to evaluate, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![16, 12, 10, 8, 6, 4])]
    widths: Vec<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepShape {
    Linear,
    Log,
}

#[derive(Args)]
struct ChirpArgs {
    #[command(flatten)]
    bank: BankArgs,
    /// Use the bank stored in a model file.
    #[arg(long, conflicts_with_all = ["bank", "bank_config"])]
    model: Option<PathBuf>,
    #[arg(long, default_value = "exact")]
    mode: String,
    #[arg(long, default_value_t = 0.5)]
    gamma_f: f64,
    #[arg(long, value_enum, default_value_t = SweepShape::Linear)]
    sweep: SweepShape,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
    #[arg(long, default_value_t = 100)]
    bins: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    /// Trace CSV written by `infer --mode fixed --trace`.
    #[arg(long)]
    trace: PathBuf,
}

fn config_error(field: &str, reason: String) -> Error {
    Error::Config {
        field: field.into(),
        reason,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn design_bank_cmd(args: DesignBankArgs) -> Result<Report> {
    let mut config: FilterBankConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => FilterBankConfig::default(),
    };
    if let Some(v) = args.f_low {
        config.freq_range.0 = v;
    }
    if let Some(v) = args.f_high {
        config.freq_range.1 = v;
    }
    if let Some(v) = args.input_shift {
        config.input_shift = v;
    }
    let bank = design_bank(&config)?;
    let mut out = create(&args.out)?;
    serde_json::to_writer_pretty(&mut out, &bank)?;
    out.flush()?;
    if let Some(path) = &args.table {
        let mut t = create(path)?;
        writeln!(t, "filter,octave,center_hz,low_hz,high_hz")?;
        for p in 0..bank.num_filters() {
            let (lo, hi) = bank.band_edges[p];
            writeln!(t, "{p},{},{},{lo},{hi}", bank.octave_of[p], bank.center_freqs[p])?;
        }
        t.flush()?;
    }
    let mut r = Report::new("design-bank");
    r.field("filters", bank.num_filters());
    r.field("octaves", config.num_octaves);
    r.field("bp_taps", config.bp_taps);
    r.field("lp_taps", config.lp_taps);
    r.field("center_hz_max", bank.center_freqs[0]);
    r.field("center_hz_min", bank.center_freqs[bank.num_filters() - 1]);
    r.field("out", args.out.display());
    Ok(r)
}

fn ingest_cmd(args: IngestArgs) -> Result<Report> {
    let opts: IngestOptions = match &args.config {
        Some(path) => read_json(path)?,
        None => IngestOptions::default(),
    };
    let corpus = match (&args.input, args.synthetic) {
        (Some(dir), _) => ingest(dir, &opts)?,
        (None, Some(SyntheticKind::Environment)) => environment_corpus(args.clips, args.seed),
        (None, Some(SyntheticKind::Digits)) => spoken_digit_corpus(args.clips, args.seed),
        (None, None) => bail!("one of --input or --synthetic is required"),
    };
    let manifest = corpus.write(&args.out)?;
    let mut r = Report::new("ingest");
    r.field("segments", corpus.segments.len());
    r.field("rate", corpus.rate);
    for (class, n) in corpus.class_counts() {
        r.field(&format!("class.{class}"), n);
    }
    r.field("manifest", manifest.display());
    Ok(r)
}

fn train_cmd(args: TrainArgs) -> Result<Report> {
    let cfg = args.flags.config()?;
    let dataset = args.data.load()?;
    let bank = args.bank.load()?;
    let outcome = train(&dataset, &bank, &cfg)?;
    let test = evaluate(&outcome.model, &dataset, Split::Test, InferMode::Mp)?;
    save_model(&outcome.model, &args.out)?;
    if let Some(path) = &args.log {
        let mut w = create(path)?;
        write_training_log(&outcome.log, &mut w)?;
        w.flush()?;
    }
    let mut r = Report::new("train");
    r.field("target", &args.data.target);
    r.field("train_clips", dataset.count(Split::Train));
    r.field("test_clips", dataset.count(Split::Test));
    r.field("epochs", cfg.epochs);
    r.field("gamma1_final", outcome.model.gamma1);
    r.field("train_acc", format!("{:.4}", outcome.train_acc));
    r.field("test_acc", format!("{:.4}", test.ratio()));
    r.field("model", args.out.display());
    Ok(r)
}

fn infer_cmd(args: InferArgs) -> Result<Report> {
    let mode: InferMode = args.mode.parse()?;
    let mut model = load_model(&args.model)?;
    if mode == InferMode::Fixed && model.quant.is_none() {
        log::info!("quantizing float model to {} bits for fixed mode", args.bits);
        model = quantize_model(&model, args.bits)?;
    }
    let datapath: DatapathConfig = match &args.datapath {
        Some(path) => read_json(path)?,
        None => DatapathConfig::default(),
    };
    datapath.validate()?;

    // (id, samples, expected label)
    let mut clips: Vec<(String, Vec<f64>, Option<bool>)> = Vec::new();
    if let Some(manifest) = &args.manifest {
        let corpus = Corpus::load(manifest)?;
        match &args.target {
            Some(target) => {
                let ds = corpus.one_vs_all(target, args.split_seed, SplitPlan::Fraction(args.train_fraction))?;
                for c in ds.clips {
                    let keep = match args.split {
                        SplitChoice::All => true,
                        SplitChoice::Train => c.split == Split::Train,
                        SplitChoice::Test => c.split == Split::Test,
                    };
                    if keep {
                        clips.push((c.id, c.samples, Some(c.label)));
                    }
                }
            }
            None => clips.extend(corpus.segments.into_iter().map(|s| (s.id, s.samples, None))),
        }
    } else {
        if args.wavs.is_empty() {
            bail!("give WAV files or --manifest");
        }
        for path in &args.wavs {
            let clip = read_wav(path)?;
            for (k, samples) in prepare_clip(&clip, &IngestOptions::default())?.into_iter().enumerate() {
                clips.push((format!("{}#{k}", path.display()), samples, None));
            }
        }
    }

    let mut trace = OpTrace::new();
    let mut rows = String::new();
    let (mut correct, mut labelled) = (0usize, 0usize);
    for (id, samples, label) in &clips {
        let decision = if mode == InferMode::Fixed {
            let run = run_fixed(samples, &model, &datapath)?;
            trace.merge(&run.trace);
            run.decision
        } else {
            infer(samples, &model, mode)?
        };
        if let Some(l) = label {
            labelled += 1;
            correct += usize::from(decision.label == *l);
        }
        rows.push_str(&decision.csv_row(id));
        rows.push('\n');
    }
    let csv = format!("{DECISION_CSV_HEADER}\n{rows}");
    match &args.out {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(csv.as_bytes())?;
            w.flush()?;
        }
        None => io::stdout().write_all(csv.as_bytes())?,
    }
    if let Some(path) = &args.trace {
        if mode != InferMode::Fixed {
            return Err(config_error("trace", "operation traces exist only in fixed mode".into()).into());
        }
        fs::write(path, trace.to_csv())?;
    }
    let mut r = Report::new("infer");
    r.field("mode", &args.mode);
    r.field("clips", clips.len());
    if labelled > 0 {
        r.field("accuracy", format!("{:.4}", correct as f64 / labelled as f64));
    }
    if mode == InferMode::Fixed {
        r.field("multiplies", trace.multiplies());
        r.field("saturations", trace.totals().saturations);
    }
    Ok(r)
}

fn quantize_cmd(args: QuantizeArgs) -> Result<Report> {
    let model: TrainedModel = load_model(&args.model)?;
    let q = quantize_model(&model, args.bits)?;
    save_model(&q, &args.out)?;
    let spec = q.quant.as_ref().expect("quantized model carries its spec");
    let mut r = Report::new("quantize");
    r.field("bits", spec.bits);
    r.field("band_pass", spec.band_pass);
    r.field("low_pass", spec.low_pass);
    r.field("weights", spec.weights);
    r.field("mean", spec.mean);
    r.field("sigma", spec.sigma);
    r.field("model", args.out.display());
    Ok(r)
}

fn sweep_cmd(args: SweepArgs) -> Result<Report> {
    let cfg = args.flags.config()?;
    if let Some(&w) = args.widths.iter().find(|w| !(2..=32).contains(*w)) {
        return Err(config_error("widths", format!("{w} is outside 2..=32")).into());
    }
    let dataset = args.data.load()?;
    let bank = args.bank.load()?;
    let rows = bitwidth_sweep(&dataset, &bank, &cfg, &args.widths)?;
    let mut w = create(&args.out)?;
    write_sweep_csv(&rows, &mut w)?;
    w.flush()?;
    let mut r = Report::new("sweep-bits");
    for row in &rows {
        let key = row.width.map_or("float".to_string(), |b| b.to_string());
        r.field(&format!("test_acc.{key}"), format!("{:.4}", row.test_acc));
    }
    r.field("out", args.out.display());
    Ok(r)
}

fn chirp_cmd(args: ChirpArgs) -> Result<Report> {
    let bank = match &args.model {
        Some(path) => load_model(path)?.bank,
        None => args.bank.load()?,
    };
    let mode = match args.mode.parse::<InferMode>()? {
        InferMode::Exact => FilterMode::Exact,
        InferMode::Mp => FilterMode::Mp { gamma_f: args.gamma_f },
        InferMode::Fixed => {
            return Err(config_error("mode", "chirp responses support exact and mp".into()).into());
        }
    };
    if args.bins == 0 {
        return Err(config_error("bins", "must be positive".into()).into());
    }
    if args.duration.is_nan() || args.duration <= 0.0 {
        return Err(config_error("duration", "must be positive".into()).into());
    }
    let kind = match args.sweep {
        SweepShape::Linear => SweepKind::Linear,
        SweepShape::Log => SweepKind::Logarithmic,
    };
    let chirp = Chirp {
        amplitude: args.amplitude,
        duration_s: args.duration,
        ..Chirp::spanning(&bank, kind)
    };
    let response = chirp_response(&bank, mode, &chirp, args.bins)?;
    let mut w = create(&args.out)?;
    response.write_csv(&mut w)?;
    w.flush()?;
    let mut r = Report::new("chirp-response");
    r.field("mode", &args.mode);
    r.field("f_start_hz", chirp.f_start);
    r.field("f_end_hz", chirp.f_end);
    r.field("ridge_monotone", response.ridge_is_monotone());
    r.field("out", args.out.display());
    Ok(r)
}

fn audit_cmd(args: AuditArgs) -> Result<Report> {
    let trace = OpTrace::from_csv(&fs::read_to_string(&args.trace)?)?;
    eprint!("{}", trace.to_text());
    let report = audit(&trace)?;
    let t = report.totals;
    let mut r = Report::new("audit");
    r.field("add", t.counts.add);
    r.field("sub", t.counts.sub);
    r.field("compare", t.counts.compare);
    r.field("shift", t.counts.shift);
    r.field("multiply", t.counts.multiply);
    r.field("max_width_bits", t.max_width_bits);
    Ok(r)
}

fn run(cli: Cli) -> Result<Report> {
    match cli.command {
        Command::DesignBank(a) => design_bank_cmd(a),
        Command::Ingest(a) => ingest_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Infer(a) => infer_cmd(a),
        Command::Quantize(a) => quantize_cmd(a),
        Command::SweepBits(a) => sweep_cmd(a),
        Command::ChirpResponse(a) => chirp_cmd(a),
        Command::Audit(a) => audit_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let usage = matches!(e.downcast_ref::<Error>(), Some(Error::Config { .. }));
            eprintln!("error: {e:#}");
            print!("{}", Report::failure(name, &format!("{e:#}")));
            if usage {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::DesignBank(_) => "design-bank",
            Command::Ingest(_) => "ingest",
            Command::Train(_) => "train",
            Command::Infer(_) => "infer",
            Command::Quantize(_) => "quantize",
            Command::SweepBits(_) => "sweep-bits",
            Command::ChirpResponse(_) => "chirp-response",
            Command::Audit(_) => "audit",
        }
    }
}
