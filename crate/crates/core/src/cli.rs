//! `depscreen` subcommands and the run configuration file.
//!
//! Exit codes: 0 ok, 2 argument error, 3 I/O or ingestion error, 4 training
//! abort, 5 evaluation or checkpoint mismatch.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::corpus::{
    assemble_sentences, generate_synthetic_corpus, load_interview_files, AssemblyConfig, Corpus, CorpusError, LoadOptions, Modalities,
    Modality, Split, TextResources, MIN_SYNTH_PATIENTS, VECTORS_FILE,
};
use crate::dsp::{AudioFeatureKind, AudioFeaturizer, FrameSpec, MelBank, Window};
use crate::kv::{KeyValues, KvError};
use crate::model::{
    load_checkpoint, report_phq, save_checkpoint, EncoderConfig, EncoderKind, HeadConfig, Model, ModelConfig, ModelError, Readout, Task,
};
use crate::seed::derive_rng;
use crate::text::{load_embeddings, load_precomputed_sentence_vectors, CanonicalizationLexicon, EmbeddingTable};
use crate::trainer::{aggregate_patient, evaluate, train, write_metrics_csv, EvalError, TrainConfig, TrainError};
use crate::visual::FRAME_WIDTH;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Argument(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    TrainingAborted(String),
    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Argument(_) => 2,
            CliError::Io(_) => 3,
            CliError::TrainingAborted(_) => 4,
            CliError::Mismatch(_) => 5,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Argument(m) => CliError::Argument(m),
            other => CliError::Io(other.to_string()),
        }
    }
}

/// Flat run configuration. Every key has a default; see [`RunConfig::KEYS`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub task: Task,
    pub encoder: EncoderKind,
    pub modalities: Modalities,
    pub layers: usize,
    pub hidden: usize,
    pub kernel: usize,
    pub dilation_base: usize,
    pub dropout: f64,
    pub readout: Readout,
    pub head_hidden: usize,
    pub head_dropout: f64,
    pub standardize: bool,
    pub epochs: usize,
    pub batch_size: usize,
    /// `None` selects the task default.
    pub learning_rate: Option<f64>,
    pub weight_decay: f64,
    pub snapshot_every: usize,
    pub early_stopping_patience: usize,
    pub oversample_positive: bool,
    pub init_output_bias: bool,
    pub sample_rate: u32,
    pub resample: bool,
    pub frame_length: f64,
    pub hop: f64,
    pub window: Window,
    pub fft_size: usize,
    pub n_mels: usize,
    pub mel_low_hz: f64,
    pub mel_high_hz: f64,
    pub audio_features: AudioFeatureKind,
    pub n_mfcc: usize,
    pub max_sentence_seconds: f64,
    pub confidence_threshold: f64,
    pub participant_label: String,
    pub lexicon: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,
    pub sentence_vectors: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let enc = EncoderConfig::default();
        RunConfig {
            seed: 0,
            threads: 1,
            task: Task::Classification,
            encoder: enc.kind,
            modalities: enc.modalities,
            layers: enc.layers,
            hidden: enc.hidden,
            kernel: enc.kernel,
            dilation_base: enc.dilation_base,
            dropout: enc.dropout,
            readout: enc.readout,
            head_hidden: 128,
            head_dropout: 0.5,
            standardize: true,
            epochs: 100,
            batch_size: 16,
            learning_rate: None,
            weight_decay: 1e-4,
            snapshot_every: 0,
            early_stopping_patience: 0,
            oversample_positive: false,
            init_output_bias: true,
            sample_rate: 16_000,
            resample: false,
            frame_length: 0.025,
            hop: 0.010,
            window: Window::Hann,
            fft_size: 512,
            n_mels: 80,
            mel_low_hz: 0.0,
            mel_high_hz: 8000.0,
            audio_features: AudioFeatureKind::LogMel,
            n_mfcc: 13,
            max_sentence_seconds: 60.0,
            confidence_threshold: 0.5,
            participant_label: "Participant".into(),
            lexicon: None,
            word_vectors: None,
            sentence_vectors: None,
        }
    }
}

fn parse_value<V: FromStr>(key: &str, raw: &str, line: usize) -> Result<V, KvError>
where
    V::Err: std::fmt::Display,
{
    raw.parse().map_err(|e| KvError { line, detail: format!("{key}: {e}") })
}

fn opt_path(raw: &str) -> Option<PathBuf> {
    (!raw.is_empty()).then(|| PathBuf::from(raw))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub const KEYS: [&'static str; 39] = [
        "seed",
        "threads",
        "task",
        "encoder",
        "modalities",
        "layers",
        "hidden",
        "kernel",
        "dilation_base",
        "dropout",
        "readout",
        "head_hidden",
        "head_dropout",
        "standardize",
        "epochs",
        "batch_size",
        "learning_rate",
        "weight_decay",
        "snapshot_every",
        "early_stopping_patience",
        "oversample_positive",
        "init_output_bias",
        "sample_rate",
        "resample",
        "frame_length",
        "hop",
        "window",
        "fft_size",
        "n_mels",
        "mel_low_hz",
        "mel_high_hz",
        "audio_features",
        "n_mfcc",
        "max_sentence_seconds",
        "confidence_threshold",
        "participant_label",
        "lexicon",
        "word_vectors",
        "sentence_vectors",
    ];

    /// Defaults overridden by the pairs in `text`; unknown keys fail.
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let kv = KeyValues::parse(text)?;
        let mut c = RunConfig::default();
        for (key, raw, line) in kv.iter_lines() {
            macro_rules! set {
                ($field:ident) => {
                    c.$field = parse_value(key, raw, line)?
                };
            }
            match key {
                "seed" => set!(seed),
                "threads" => set!(threads),
                "task" => set!(task),
                "encoder" => set!(encoder),
                "modalities" => {
                    c.modalities = raw.parse().map_err(|e: CorpusError| KvError { line, detail: format!("modalities: {e}") })?
                }
                "layers" => set!(layers),
                "hidden" => set!(hidden),
                "kernel" => set!(kernel),
                "dilation_base" => set!(dilation_base),
                "dropout" => set!(dropout),
                "readout" => set!(readout),
                "head_hidden" => set!(head_hidden),
                "head_dropout" => set!(head_dropout),
                "standardize" => set!(standardize),
                "epochs" => set!(epochs),
                "batch_size" => set!(batch_size),
                "learning_rate" => c.learning_rate = if raw == "auto" { None } else { Some(parse_value(key, raw, line)?) },
                "weight_decay" => set!(weight_decay),
                "snapshot_every" => set!(snapshot_every),
                "early_stopping_patience" => set!(early_stopping_patience),
                "oversample_positive" => set!(oversample_positive),
                "init_output_bias" => set!(init_output_bias),
                "sample_rate" => set!(sample_rate),
                "resample" => set!(resample),
                "frame_length" => set!(frame_length),
                "hop" => set!(hop),
                "window" => set!(window),
                "fft_size" => set!(fft_size),
                "n_mels" => set!(n_mels),
                "mel_low_hz" => set!(mel_low_hz),
                "mel_high_hz" => set!(mel_high_hz),
                "audio_features" => set!(audio_features),
                "n_mfcc" => set!(n_mfcc),
                "max_sentence_seconds" => set!(max_sentence_seconds),
                "confidence_threshold" => set!(confidence_threshold),
                "participant_label" => c.participant_label = raw.to_string(),
                "lexicon" => c.lexicon = opt_path(raw),
                "word_vectors" => c.word_vectors = opt_path(raw),
                "sentence_vectors" => c.sentence_vectors = opt_path(raw),
                other => return Err(KvError { line, detail: format!("unknown key {other:?}") }),
            }
        }
        Ok(c)
    }

    pub fn serialize(&self) -> String {
        let mut kv = KeyValues::default();
        kv.insert("seed", self.seed);
        kv.insert("threads", self.threads);
        kv.insert("task", self.task);
        kv.insert("encoder", self.encoder);
        kv.insert("modalities", self.modalities);
        kv.insert("layers", self.layers);
        kv.insert("hidden", self.hidden);
        kv.insert("kernel", self.kernel);
        kv.insert("dilation_base", self.dilation_base);
        kv.insert("dropout", self.dropout);
        kv.insert("readout", self.readout);
        kv.insert("head_hidden", self.head_hidden);
        kv.insert("head_dropout", self.head_dropout);
        kv.insert("standardize", self.standardize);
        kv.insert("epochs", self.epochs);
        kv.insert("batch_size", self.batch_size);
        kv.insert("learning_rate", self.learning_rate.map_or("auto".to_string(), |v| v.to_string()));
        kv.insert("weight_decay", self.weight_decay);
        kv.insert("snapshot_every", self.snapshot_every);
        kv.insert("early_stopping_patience", self.early_stopping_patience);
        kv.insert("oversample_positive", self.oversample_positive);
        kv.insert("init_output_bias", self.init_output_bias);
        kv.insert("sample_rate", self.sample_rate);
        kv.insert("resample", self.resample);
        kv.insert("frame_length", self.frame_length);
        kv.insert("hop", self.hop);
        kv.insert("window", self.window.name());
        kv.insert("fft_size", self.fft_size);
        kv.insert("n_mels", self.n_mels);
        kv.insert("mel_low_hz", self.mel_low_hz);
        kv.insert("mel_high_hz", self.mel_high_hz);
        kv.insert("audio_features", self.audio_features.name());
        kv.insert("n_mfcc", self.n_mfcc);
        kv.insert("max_sentence_seconds", self.max_sentence_seconds);
        kv.insert("confidence_threshold", self.confidence_threshold);
        kv.insert("participant_label", &self.participant_label);
        kv.insert("lexicon", show_path(&self.lexicon));
        kv.insert("word_vectors", show_path(&self.word_vectors));
        kv.insert("sentence_vectors", show_path(&self.sentence_vectors));
        kv.serialize()
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Argument(format!("{}: {e}", path.display())))
    }

    pub fn assembly(&self) -> Result<AssemblyConfig, CliError> {
        let arg = |e: crate::dsp::DspError| CliError::Argument(e.to_string());
        let spec = FrameSpec { frame_length: self.frame_length, hop: self.hop, window: self.window, fft_size: self.fft_size };
        spec.validate(self.sample_rate).map_err(arg)?;
        let bank = MelBank::new(self.n_mels, self.fft_size, self.sample_rate, self.mel_low_hz, self.mel_high_hz).map_err(arg)?;
        Ok(AssemblyConfig {
            participant_label: self.participant_label.clone(),
            featurizer: AudioFeaturizer::new(spec, bank, self.audio_features, self.n_mfcc).map_err(arg)?,
            sample_rate: self.sample_rate,
            resample: self.resample,
            max_sentence_seconds: self.max_sentence_seconds,
            confidence_threshold: self.confidence_threshold,
            modalities: self.modalities,
        })
    }

    pub fn model_config(&self, text_width: usize, audio_width: usize) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                kind: self.encoder,
                layers: self.layers,
                hidden: self.hidden,
                kernel: self.kernel,
                dilation_base: self.dilation_base,
                dropout: self.dropout,
                modalities: self.modalities,
                readout: self.readout,
            },
            head: HeadConfig { task: self.task, hidden: self.head_hidden, dropout: self.head_dropout },
            input_widths: [audio_width, FRAME_WIDTH, text_width],
            audio_features: self.audio_features.name().to_string(),
            standardize: self.standardize,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            task: self.task,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate.unwrap_or_else(|| TrainConfig::default_learning_rate(self.task)),
            weight_decay: self.weight_decay,
            seed: self.seed,
            snapshot_every: self.snapshot_every,
            early_stopping_patience: self.early_stopping_patience,
            oversample_positive: self.oversample_positive,
            init_output_bias: self.init_output_bias,
            monitor_eval_loss: false,
        }
    }

    /// Text resources; word vectors default to the corpus copy.
    pub fn text_resources(&self, corpus: Option<&Path>) -> Result<TextResources, CliError> {
        let io = |e: crate::text::TextError| CliError::Io(e.to_string());
        let lexicon = match &self.lexicon {
            Some(p) => CanonicalizationLexicon::load(p).map_err(io)?,
            None => CanonicalizationLexicon::default(),
        };
        let needs_vectors = self.modalities.contains(Modality::Linguistic) && self.sentence_vectors.is_none();
        let vectors_path = self.word_vectors.clone().or_else(|| corpus.map(|c| c.join(VECTORS_FILE)));
        let embeddings = match vectors_path {
            Some(p) if needs_vectors || p.exists() => load_embeddings(&p).map_err(io)?,
            None if needs_vectors => {
                return Err(CliError::Argument("word vectors are required for the linguistic modality (--vectors)".into()))
            }
            _ => EmbeddingTable::new(300),
        };
        let sentence_vectors = match &self.sentence_vectors {
            Some(p) => Some(load_precomputed_sentence_vectors(p).map_err(io)?),
            None => None,
        };
        Ok(TextResources { lexicon, embeddings, sentence_vectors })
    }
}

#[derive(Debug, Parser)]
#[command(name = "depscreen", version, about = "Multi-modal depression severity scoring")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a deterministic synthetic corpus.
    Synth {
        #[arg(long)]
        patients: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a corpus's training split.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a corpus split.
    Eval(EvalArgs),
    /// Score one interview.
    Predict(PredictArgs),
    /// Print the default run configuration.
    Config,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration file (key = value).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads for data loading and per-sample gradients.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// `classification` or `regression`.
    #[arg(long)]
    pub task: Option<String>,
    /// `ccnn`, `lstm` or `mean`.
    #[arg(long)]
    pub encoder: Option<String>,
    /// Comma-separated subset of `a`, `v`, `l`.
    #[arg(long)]
    pub modalities: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss trace CSV; defaults to `<out>.metrics.csv`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "validation")]
    pub split: String,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Accepted for symmetry with `train`; the checkpoint's task is used.
    #[arg(long)]
    pub task: Option<String>,
    /// Report CSV; defaults to `<ckpt>.<split>.csv`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub audio: Option<PathBuf>,
    #[arg(long)]
    pub keypoints: Option<PathBuf>,
    #[arg(long)]
    pub transcript: PathBuf,
    /// Word vectors file (required when the linguistic modality is active).
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

fn parse_arg<V: FromStr>(raw: &str) -> Result<V, CliError>
where
    V::Err: std::fmt::Display,
{
    raw.parse().map_err(|e| CliError::Argument(format!("{e}")))
}

fn base_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    if cfg.threads == 0 {
        return Err(CliError::Argument("threads must be positive".into()));
    }
    Ok(cfg)
}

/// Runs `f` on a pool of `threads` workers.
fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn model_error(e: ModelError) -> CliError {
    match e {
        ModelError::Config(m) => CliError::Argument(m),
        other => CliError::Mismatch(other.to_string()),
    }
}

pub fn cmd_synth(patients: usize, seed: u64, out: &Path) -> Result<String, CliError> {
    if patients < MIN_SYNTH_PATIENTS {
        return Err(CliError::Argument(format!("--patients must be at least {MIN_SYNTH_PATIENTS}, got {patients}")));
    }
    let m = generate_synthetic_corpus(patients, seed, out)?;
    Ok(format!("wrote {patients} patients to {} ({} train, {} validation)", out.display(), m.train.len(), m.validation.len()))
}

pub fn cmd_train(args: &TrainArgs) -> Result<String, CliError> {
    let mut cfg = base_config(&args.common)?;
    if let Some(t) = &args.task {
        cfg.task = parse_arg(t)?;
    }
    if let Some(e) = &args.encoder {
        cfg.encoder = parse_arg(e)?;
    }
    if let Some(m) = &args.modalities {
        cfg.modalities = m.parse()?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if cfg.batch_size == 0 {
        return Err(CliError::Argument("batch_size must be positive".into()));
    }
    let assembly = cfg.assembly()?;
    let probe = cfg.model_config(300, assembly.featurizer.width());
    probe.validate().map_err(model_error)?;

    let corpus = Corpus::open(&args.corpus)?;
    let text = cfg.text_resources(Some(&args.corpus))?;
    let tcfg = cfg.train_config();
    let out = args.out.clone();
    let trace_path = args.trace.clone().unwrap_or_else(|| PathBuf::from(format!("{}.metrics.csv", out.display())));

    with_threads(cfg.threads, || {
        let train_set = corpus.load_split(Split::Train, &assembly, &text)?;
        let val_set = corpus.load_split(Split::Validation, &assembly, &text)?;
        if train_set.is_empty() {
            return Err(CliError::Argument("the training split has no sentences".into()));
        }
        let mconfig = cfg.model_config(text.width(), assembly.featurizer.width());
        let mut model: Model<f32> = Model::new(mconfig, &mut derive_rng(cfg.seed, "model/init")).map_err(model_error)?;
        let mut snapshot_err = None;
        let trace = train(&mut model, &train_set, Some(&val_set), &tcfg, |rec, m| {
            if tcfg.snapshot_every > 0 && rec.epoch % tcfg.snapshot_every == 0 {
                let p = PathBuf::from(format!("{}.epoch{}", out.display(), rec.epoch));
                if let Err(e) = save_checkpoint(m, &p) {
                    snapshot_err.get_or_insert(e);
                }
            }
        })
        .map_err(|e| match e {
            TrainError::NonFinite { .. } => CliError::TrainingAborted(format!("training aborted: {e}")),
            TrainError::EmptySplit | TrainError::Unlabelled(_) => CliError::Argument(e.to_string()),
            other => CliError::TrainingAborted(other.to_string()),
        })?;
        if let Some(e) = snapshot_err {
            return Err(CliError::Io(e.to_string()));
        }
        save_checkpoint(&model, &out).map_err(|e| CliError::Io(e.to_string()))?;
        let report =
            (!val_set.is_empty()).then(|| evaluate(&model, &val_set)).transpose().map_err(|e| CliError::Mismatch(e.to_string()))?;
        write_metrics_csv(&trace_path, cfg.task, &trace, report.as_ref().map(|r| ("validation", r)))
            .map_err(|e| CliError::Io(format!("{}: {e}", trace_path.display())))?;
        let mut summary = format!(
            "trained {} {} model on {} sentences for {} epochs; checkpoint {}\n",
            cfg.encoder,
            cfg.modalities,
            train_set.len(),
            trace.len(),
            out.display()
        );
        if let Some(last) = trace.last() {
            summary.push_str(&format!("final train loss {:.5}\n", last.train_loss));
        }
        if let Some(r) = report {
            summary.push_str(&format!("validation:\n{r}\n"));
        }
        Ok(summary)
    })?
}

/// Checkpoint settings take precedence over the config for everything that
/// shapes the model inputs.
fn align_with_checkpoint(cfg: &mut RunConfig, model: &Model<f32>) -> Result<(), CliError> {
    cfg.modalities = model.modalities();
    cfg.task = model.task();
    cfg.audio_features = parse_arg(&model.config.audio_features).map_err(|e| CliError::Mismatch(e.to_string()))?;
    Ok(())
}

fn check_widths(model: &Model<f32>, assembly: &AssemblyConfig, text: &TextResources) -> Result<(), CliError> {
    let have = [assembly.featurizer.width(), FRAME_WIDTH, text.width()];
    for (i, m) in Modality::ALL.iter().enumerate() {
        if model.modalities().contains(*m) && have[i] != model.config.input_widths[i] {
            return Err(CliError::Mismatch(format!(
                "checkpoint expects {} features of width {}, the current configuration produces {}",
                m.name(),
                model.config.input_widths[i],
                have[i]
            )));
        }
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<String, CliError> {
    let mut cfg = base_config(&args.common)?;
    let split: Split = args.split.parse()?;
    let model = load_checkpoint(&args.ckpt).map_err(|e| CliError::Mismatch(e.to_string()))?;
    if let Some(t) = &args.task {
        let requested: Task = parse_arg(t)?;
        if requested != model.task() {
            log::warn!("--task {requested} ignored: the checkpoint is a {} model", model.task());
        }
    }
    align_with_checkpoint(&mut cfg, &model)?;
    let assembly = cfg.assembly()?;
    let corpus = Corpus::open(&args.corpus)?;
    let text = cfg.text_resources(Some(&args.corpus))?;
    check_widths(&model, &assembly, &text)?;
    let report_path = args.report.clone().unwrap_or_else(|| PathBuf::from(format!("{}.{}.csv", args.ckpt.display(), split)));
    with_threads(cfg.threads, || {
        let samples = corpus.load_split(split, &assembly, &text)?;
        let report = evaluate(&model, &samples).map_err(|e| match e {
            EvalError::EmptyAggregation => CliError::Mismatch(format!("the {split} split has no sentences to aggregate")),
            other => CliError::Mismatch(other.to_string()),
        })?;
        write_metrics_csv(&report_path, model.task(), &[], Some((&split.to_string(), &report)))
            .map_err(|e| CliError::Io(format!("{}: {e}", report_path.display())))?;
        Ok(format!("{report}\n"))
    })?
}

pub fn cmd_predict(args: &PredictArgs) -> Result<String, CliError> {
    let mut cfg = base_config(&args.common)?;
    let model = load_checkpoint(&args.ckpt).map_err(|e| CliError::Mismatch(e.to_string()))?;
    align_with_checkpoint(&mut cfg, &model)?;
    if let Some(v) = &args.vectors {
        cfg.word_vectors = Some(v.clone());
    }
    let assembly = cfg.assembly()?;
    let text = cfg.text_resources(None)?;
    check_widths(&model, &assembly, &text)?;
    let opts = LoadOptions {
        audio: cfg.modalities.contains(Modality::Audio),
        visual: cfg.modalities.contains(Modality::Visual),
        sample_rate: cfg.sample_rate,
        resample: cfg.resample,
    };
    if opts.audio && args.audio.is_none() {
        return Err(CliError::Argument("--audio is required by the checkpoint's modalities".into()));
    }
    if opts.visual && args.keypoints.is_none() {
        return Err(CliError::Argument("--keypoints is required by the checkpoint's modalities".into()));
    }
    let id = args.transcript.file_stem().and_then(|s| s.to_str()).unwrap_or("interview").trim_end_matches("_TRANSCRIPT").to_string();
    let record = load_interview_files(&id, args.audio.as_deref(), args.keypoints.as_deref(), &args.transcript, None, opts)?;
    let (samples, _) = assemble_sentences(&record, &assembly, &text)?;
    if samples.is_empty() {
        return Err(CliError::Mismatch("the transcript has no participant sentences".into()));
    }
    let outputs = samples.iter().map(|s| model.predict_sample(s)).collect::<Result<Vec<_>, _>>().map_err(model_error)?;
    let task = model.task();
    let fmt_row = |scope: &str, index: &str, v: f64| match task {
        Task::Regression => format!("{scope},{index},{},\n", report_phq(v)),
        Task::Classification => format!("{scope},{index},,{v}\n"),
    };
    let mut out = String::from("scope,sentence_index,phq_estimate,mdd_probability\n");
    for (s, &v) in samples.iter().zip(&outputs) {
        out.push_str(&fmt_row("sentence", &s.sentence_index.to_string(), v));
    }
    let agg = aggregate_patient(&outputs, task).map_err(|e| CliError::Mismatch(e.to_string()))?;
    out.push_str(&fmt_row("patient", "", agg));
    Ok(out)
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Synth { patients, seed, out } => cmd_synth(*patients, *seed, out),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Config => Ok(RunConfig::default().serialize()),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
