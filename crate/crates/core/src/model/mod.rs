//! Sentence encoders (causal CNN, stacked LSTM, temporal mean), late
//! fusion, task heads and checkpoints.

mod checkpoint;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::Rng;
use thiserror::Error;

use crate::corpus::{Modalities, Modality, PaddedBatch, SentenceSample, MAX_PHQ};
use crate::kv::{KeyValues, KvError};
use crate::numerics::{lstm_layer, lstm_param_names, Mode, NumericsError, ParamSet, Scalar, Tape, Tensor, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("model input error: {0}")]
    Input(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("checkpoint {path}: {detail}")]
    Checkpoint { path: String, detail: String },
}

impl From<KvError> for ModelError {
    fn from(e: KvError) -> Self {
        ModelError::Config(e.to_string())
    }
}

macro_rules! keyword_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(
                        "unknown {} {other:?} (expected one of: {})",
                        stringify!($name),
                        [$($text),+].join(", ")
                    )),
                }
            }
        }
    };
}

keyword_enum!(EncoderKind { Ccnn => "ccnn", Lstm => "lstm", Mean => "mean" });
keyword_enum!(Readout { Last => "last", Max => "max" });
keyword_enum!(Task { Classification => "classification", Regression => "regression" });

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub layers: usize,
    pub hidden: usize,
    pub kernel: usize,
    pub dilation_base: usize,
    pub dropout: f64,
    pub modalities: Modalities,
    pub readout: Readout,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: EncoderKind::Ccnn,
            layers: 10,
            hidden: 128,
            kernel: 5,
            dilation_base: 2,
            dropout: 0.5,
            modalities: Modalities::all(),
            readout: Readout::Last,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        match self.kind {
            EncoderKind::Mean if self.modalities.len() != 1 => {
                bad(format!("the mean encoder takes exactly one modality, got {}", self.modalities))
            }
            EncoderKind::Mean => Ok(()),
            _ if self.layers == 0 || self.hidden == 0 => bad("layers and hidden must be positive".into()),
            EncoderKind::Ccnn if self.kernel == 0 || self.dilation_base == 0 => bad("kernel and dilation base must be positive".into()),
            _ => Ok(()),
        }
    }

    /// Dilation of layer `i` (1-based).
    pub fn dilation(&self, i: usize) -> usize {
        self.dilation_base.pow((i - 1) as u32)
    }

    /// Trailing input frames that can reach the last output frame.
    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel - 1) * (1..=self.layers).map(|i| self.dilation(i)).sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadConfig {
    pub task: Task,
    pub hidden: usize,
    pub dropout: f64,
}

/// Everything needed to rebuild a model's parameter layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub head: HeadConfig,
    /// Frame widths of the audio, visual and linguistic streams.
    pub input_widths: [usize; 3],
    /// Name of the audio front end the model was trained on.
    pub audio_features: String,
    /// Standardize input frames with statistics fitted on training data.
    pub standardize: bool,
}

impl ModelConfig {
    pub fn width(&self, m: Modality) -> usize {
        self.input_widths[Modality::ALL.iter().position(|&x| x == m).expect("known modality")]
    }

    pub fn embedding_width(&self) -> usize {
        match self.encoder.kind {
            EncoderKind::Mean => self.encoder.modalities.iter().map(|m| self.width(m)).sum(),
            _ => self.encoder.hidden * self.encoder.modalities.len(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.encoder.validate()?;
        if self.head.hidden == 0 || !(0.0..1.0).contains(&self.head.dropout) {
            return Err(ModelError::Config("head hidden must be positive and dropout in [0, 1)".into()));
        }
        if self.input_widths.contains(&0) {
            return Err(ModelError::Config("input widths must be positive".into()));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KeyValues {
        let e = &self.encoder;
        let mut kv = KeyValues::default();
        kv.insert("task", self.head.task);
        kv.insert("encoder", e.kind);
        kv.insert("layers", e.layers);
        kv.insert("hidden", e.hidden);
        kv.insert("kernel", e.kernel);
        kv.insert("dilation_base", e.dilation_base);
        kv.insert("dropout", e.dropout);
        kv.insert("modalities", e.modalities);
        kv.insert("readout", e.readout);
        kv.insert("head_hidden", self.head.hidden);
        kv.insert("head_dropout", self.head.dropout);
        kv.insert("audio_width", self.input_widths[0]);
        kv.insert("visual_width", self.input_widths[1]);
        kv.insert("text_width", self.input_widths[2]);
        kv.insert("audio_features", &self.audio_features);
        kv.insert("standardize", self.standardize);
        kv
    }

    pub fn from_kv(mut kv: KeyValues) -> Result<Self, ModelError> {
        let modalities: String = kv.take_parsed("modalities")?;
        let config = ModelConfig {
            encoder: EncoderConfig {
                kind: kv.take_parsed("encoder")?,
                layers: kv.take_parsed("layers")?,
                hidden: kv.take_parsed("hidden")?,
                kernel: kv.take_parsed("kernel")?,
                dilation_base: kv.take_parsed("dilation_base")?,
                dropout: kv.take_parsed("dropout")?,
                modalities: modalities.parse().map_err(|e: crate::corpus::CorpusError| ModelError::Config(e.to_string()))?,
                readout: kv.take_parsed("readout")?,
            },
            head: HeadConfig {
                task: kv.take_parsed("task")?,
                hidden: kv.take_parsed("head_hidden")?,
                dropout: kv.take_parsed("head_dropout")?,
            },
            input_widths: [kv.take_parsed("audio_width")?, kv.take_parsed("visual_width")?, kv.take_parsed("text_width")?],
            audio_features: kv.take_parsed("audio_features")?,
            standardize: kv.take_parsed("standardize")?,
        };
        kv.ensure_empty()?;
        config.validate()?;
        Ok(config)
    }
}

/// Per-feature mean and standard deviation of one modality's frames.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl FrameStats {
    /// Statistics over every frame of every sample; near-constant features
    /// keep unit scale.
    pub fn fit<'a>(frames: impl Iterator<Item = &'a Tensor<f32>>) -> Option<Self> {
        let (mut sum, mut sq, mut n) = (Vec::<f64>::new(), Vec::<f64>::new(), 0usize);
        for t in frames {
            if sum.is_empty() {
                sum = vec![0.0; t.cols()];
                sq = vec![0.0; t.cols()];
            }
            for r in 0..t.rows() {
                for (c, &v) in t.row(r).iter().enumerate() {
                    sum[c] += v as f64;
                    sq[c] += (v as f64) * (v as f64);
                }
            }
            n += t.rows();
        }
        if n == 0 {
            return None;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let sd = (q / n as f64 - m * m).max(0.0).sqrt();
                if sd < 1e-6 {
                    1.0
                } else {
                    sd as f32
                }
            })
            .collect();
        Some(FrameStats { mean: mean.iter().map(|&m| m as f32).collect(), std })
    }

    fn apply<T: Scalar>(&self, t: &Tensor<T>) -> Tensor<T> {
        let cols = t.cols();
        let data = t
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = i % cols;
                T::of((v.as_f64() - self.mean[c] as f64) / self.std[c] as f64)
            })
            .collect();
        Tensor::new(t.shape().to_vec(), data).expect("same shape")
    }
}

/// One modality's frames (possibly right-padded) and its true length.
#[derive(Clone, Copy, Debug)]
pub struct ModalityInput<'a, T: Scalar> {
    pub frames: &'a Tensor<T>,
    pub length: usize,
}

/// Clamps a raw regression output to the PHQ range.
pub fn report_phq(raw: f64) -> f64 {
    raw.clamp(0.0, MAX_PHQ as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T: Scalar = f32> {
    pub config: ModelConfig,
    pub params: ParamSet<T>,
    /// Input standardization per modality, when enabled and fitted.
    pub stats: IndexMap<Modality, FrameStats>,
}

impl<T: Scalar> Model<T> {
    /// Glorot-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = ParamSet::new();
        let e = &config.encoder;
        let h = e.hidden;
        for m in e.modalities.iter() {
            let p = m.name();
            let f = config.width(m);
            match e.kind {
                EncoderKind::Ccnn => {
                    params.insert_glorot(format!("{p}.proj.w"), &[f, h], f, h, rng)?;
                    params.insert_zeros(format!("{p}.proj.b"), &[h])?;
                    for i in 1..=e.layers {
                        params.insert_glorot(format!("{p}.conv{i}.w"), &[e.kernel, h, h], e.kernel * h, e.kernel * h, rng)?;
                        params.insert_zeros(format!("{p}.conv{i}.b"), &[h])?;
                    }
                }
                EncoderKind::Lstm => {
                    for l in 0..e.layers {
                        let input = if l == 0 { f } else { h };
                        let [w_ih, w_hh, b] = lstm_param_names(p, l);
                        params.insert_glorot(w_ih, &[input, 4 * h], input, 4 * h, rng)?;
                        params.insert_glorot(w_hh, &[h, 4 * h], h, 4 * h, rng)?;
                        params.insert_zeros(b, &[4 * h])?;
                    }
                }
                EncoderKind::Mean => {}
            }
        }
        let (ew, hh) = (config.embedding_width(), config.head.hidden);
        params.insert_glorot("head.fc1.w", &[ew, hh], ew, hh, rng)?;
        params.insert_zeros("head.fc1.b", &[hh])?;
        params.insert_glorot("head.out.w", &[hh, 1], hh, 1, rng)?;
        params.insert_zeros("head.out.b", &[1])?;
        Ok(Model { config, params, stats: IndexMap::new() })
    }

    pub fn task(&self) -> Task {
        self.config.head.task
    }

    pub fn modalities(&self) -> Modalities {
        self.config.encoder.modalities
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_elements()
    }

    /// Parameter count of one modality's encoder.
    pub fn encoder_parameters(&self, m: Modality) -> usize {
        let prefix = format!("{}.", m.name());
        self.params.iter().filter(|(n, _)| n.starts_with(&prefix)).map(|(_, t)| t.len()).sum()
    }

    /// Fits input standardization on training samples (no-op unless enabled).
    pub fn fit_standardization(&mut self, samples: &[SentenceSample]) {
        self.stats.clear();
        if !self.config.standardize {
            return;
        }
        for m in self.modalities().iter() {
            if let Some(s) = FrameStats::fit(samples.iter().map(|s| s.features(m))) {
                self.stats.insert(m, s);
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model { config: self.config.clone(), params: self.params.cast(), stats: self.stats.clone() }
    }

    fn encode_modality<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_, T>,
        m: Modality,
        input: ModalityInput<'_, T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var, ModelError> {
        let e = &self.config.encoder;
        let frames = input.frames;
        if frames.rank() != 2 || frames.cols() != self.config.width(m) {
            return Err(ModelError::Input(format!("{} frames {:?}, expected width {}", m.name(), frames.shape(), self.config.width(m))));
        }
        if input.length == 0 || input.length > frames.rows() {
            return Err(ModelError::Input(format!("{} length {} of {} frames", m.name(), input.length, frames.rows())));
        }
        let x = match self.stats.get(&m) {
            Some(s) => tape.constant(s.apply(frames)),
            None => tape.constant(frames.clone()),
        };
        let p = m.name();
        let top = match e.kind {
            EncoderKind::Mean => return Ok(tape.mean_rows(x, input.length)?),
            EncoderKind::Ccnn => {
                let (w, b) = (tape.param(&format!("{p}.proj.w"))?, tape.param(&format!("{p}.proj.b"))?);
                let mut h = tape.dense(x, w, b)?;
                for i in 1..=e.layers {
                    let (w, b) = (tape.param(&format!("{p}.conv{i}.w"))?, tape.param(&format!("{p}.conv{i}.b"))?);
                    h = tape.causal_conv1d(h, w, b, e.dilation(i))?;
                    h = tape.relu(h);
                    h = tape.dropout(h, e.dropout, mode, rng)?;
                }
                h
            }
            EncoderKind::Lstm => {
                let mut h = x;
                for l in 0..e.layers {
                    h = lstm_layer(tape, h, p, l, e.hidden)?;
                    h = tape.dropout(h, e.dropout, mode, rng)?;
                }
                h
            }
        };
        Ok(match e.readout {
            Readout::Last => tape.select_row(top, input.length - 1)?,
            Readout::Max => tape.max_rows(top, input.length)?,
        })
    }

    /// `[1, embedding_width]` fused sentence embedding. Only the active
    /// modalities' inputs are read.
    pub fn embed<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_, T>,
        inputs: &[Option<ModalityInput<'_, T>>; 3],
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var, ModelError> {
        let mut parts = Vec::new();
        for m in self.modalities().iter() {
            let idx = Modality::ALL.iter().position(|&x| x == m).expect("known modality");
            let input = inputs[idx].ok_or_else(|| ModelError::Input(format!("missing {} features", m.name())))?;
            parts.push(self.encode_modality(tape, m, input, mode, rng)?);
        }
        Ok(if parts.len() == 1 { parts[0] } else { tape.concat_cols(&parts)? })
    }

    /// Head output `[1, 1]`: a probability for classification, the raw
    /// (unclamped) estimate for regression.
    pub fn head<R: Rng + ?Sized>(&self, tape: &mut Tape<'_, T>, embedding: Var, mode: Mode, rng: &mut R) -> Result<Var, ModelError> {
        let width = tape.value(embedding).len();
        if width != self.config.embedding_width() {
            return Err(ModelError::Input(format!("embedding width {width}, head expects {}", self.config.embedding_width())));
        }
        let (w1, b1) = (tape.param("head.fc1.w")?, tape.param("head.fc1.b")?);
        let (w2, b2) = (tape.param("head.out.w")?, tape.param("head.out.b")?);
        let h = tape.dense(embedding, w1, b1)?;
        let h = tape.relu(h);
        let h = tape.dropout(h, self.config.head.dropout, mode, rng)?;
        let out = tape.dense(h, w2, b2)?;
        Ok(match self.task() {
            Task::Classification => tape.sigmoid(out),
            Task::Regression => out,
        })
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_, T>,
        inputs: &[Option<ModalityInput<'_, T>>; 3],
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var, ModelError> {
        let e = self.embed(tape, inputs, mode, rng)?;
        self.head(tape, e, mode, rng)
    }

    /// Eval-mode head output for one sample (probability, or raw estimate).
    pub fn predict_sample(&self, sample: &SentenceSample) -> Result<f64, ModelError> {
        let frames: Vec<Tensor<T>> = Modality::ALL.iter().map(|&m| sample.features(m).cast()).collect();
        let inputs = [0, 1, 2].map(|i| Some(ModalityInput { frames: &frames[i], length: frames[i].rows() }));
        let mut tape = Tape::with_params(&self.params);
        let out = self.forward(&mut tape, &inputs, Mode::Eval, &mut rand::rngs::mock::StepRng::new(0, 0))?;
        Ok(tape.value(out).data()[0].as_f64())
    }

    /// Eval-mode outputs for every member of a padded batch, reading each
    /// member's padded frames with its true length.
    pub fn predict_batch(&self, batch: &PaddedBatch) -> Result<Vec<f64>, ModelError> {
        (0..batch.len())
            .map(|b| {
                let frames: Vec<Tensor<T>> = Modality::ALL.iter().map(|&m| batch.modality(m).padded(b).cast()).collect();
                let inputs =
                    [0, 1, 2].map(|i| Some(ModalityInput { frames: &frames[i], length: batch.modality(Modality::ALL[i]).lengths[b] }));
                let mut tape = Tape::with_params(&self.params);
                let out = self.forward(&mut tape, &inputs, Mode::Eval, &mut rand::rngs::mock::StepRng::new(0, 0))?;
                Ok(tape.value(out).data()[0].as_f64())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn config(kind: EncoderKind, task: Task, modalities: &str, hidden: usize, layers: usize) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                kind,
                layers,
                hidden,
                kernel: 5,
                dilation_base: 2,
                dropout: 0.5,
                modalities: modalities.parse().unwrap(),
                readout: Readout::Last,
            },
            head: HeadConfig { task, hidden: 8, dropout: 0.5 },
            input_widths: [80, 204, 300],
            audio_features: "logmel".into(),
            standardize: false,
        }
    }

    fn sample(rng: &mut ChaCha8Rng, lens: [usize; 3]) -> SentenceSample {
        let mut t = |rows: usize, cols: usize| {
            Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap()
        };
        SentenceSample {
            patient_id: "p".into(),
            sentence_index: 0,
            audio: t(lens[0], 80),
            visual: t(lens[1], 204),
            text: t(lens[2], 300),
            label: Some(Label::new(3).unwrap()),
        }
    }

    #[test]
    fn audio_stack_parameter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m: Model<f32> = Model::new(config(EncoderKind::Ccnn, Task::Classification, "a", 128, 10), &mut rng).unwrap();
        let expected = 80 * 128 + 128 + 10 * (5 * 128 * 128 + 128);
        assert_eq!(m.encoder_parameters(Modality::Audio), expected);
        assert_eq!(m.encoder_parameters(Modality::Visual), 0);
    }

    #[test]
    fn embedding_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (kind, mods, width) in [
            (EncoderKind::Ccnn, "a,v,l", 3 * 16),
            (EncoderKind::Lstm, "a,v,l", 3 * 16),
            (EncoderKind::Ccnn, "v", 16),
            (EncoderKind::Mean, "a", 80),
            (EncoderKind::Mean, "l", 300),
        ] {
            let cfg = config(kind, Task::Regression, mods, 16, 2);
            assert_eq!(cfg.embedding_width(), width);
            let m: Model<f64> = Model::new(cfg, &mut rng).unwrap();
            let s = sample(&mut rng, [7, 4, 3]);
            let frames: Vec<Tensor<f64>> = Modality::ALL.iter().map(|&x| s.features(x).cast()).collect();
            let inputs = [0, 1, 2].map(|i| Some(ModalityInput { frames: &frames[i], length: frames[i].rows() }));
            let mut tape = Tape::with_params(&m.params);
            let e = m.embed(&mut tape, &inputs, Mode::Eval, &mut rng).unwrap();
            assert_eq!(tape.value(e).shape(), &[1, width]);
        }
        assert_eq!(config(EncoderKind::Ccnn, Task::Regression, "a,v,l", 128, 10).embedding_width(), 384);
    }

    #[test]
    fn mean_encoder_rejects_fusion() {
        let cfg = config(EncoderKind::Mean, Task::Regression, "a,l", 16, 2);
        assert!(matches!(cfg.validate(), Err(ModelError::Config(_))));
    }

    #[test]
    fn single_modality_ignores_other_streams() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m: Model<f64> = Model::new(config(EncoderKind::Ccnn, Task::Classification, "v", 8, 3), &mut rng).unwrap();
        let visual = Tensor::<f64>::filled(&[5, 204], 0.3);
        let inputs = [None, Some(ModalityInput { frames: &visual, length: 5 }), None];
        let mut tape = Tape::with_params(&m.params);
        assert!(m.forward(&mut tape, &inputs, Mode::Eval, &mut rng).is_ok());
        let mut tape = Tape::with_params(&m.params);
        let missing = [None, None, None];
        assert!(matches!(m.forward(&mut tape, &missing, Mode::Eval, &mut rng), Err(ModelError::Input(_))));
    }

    #[test]
    fn zero_heads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (task, want) in [(Task::Classification, 0.5), (Task::Regression, 0.0)] {
            let mut m: Model<f64> = Model::new(config(EncoderKind::Ccnn, task, "a", 8, 2), &mut rng).unwrap();
            for name in ["head.fc1.w", "head.out.w"] {
                let shape = m.params.get(name).unwrap().shape().to_vec();
                m.params.set(name, Tensor::zeros(&shape)).unwrap();
            }
            let s = sample(&mut rng, [6, 2, 2]);
            assert_eq!(m.predict_sample(&s).unwrap(), want);
        }
        assert_eq!(report_phq(-1.3), 0.0);
        assert_eq!(report_phq(25.1), 24.0);
        assert_eq!(report_phq(7.25), 7.25);
    }

    #[test]
    fn hand_set_classifier_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut cfg = config(EncoderKind::Mean, Task::Classification, "a", 8, 1);
        cfg.head.hidden = 1;
        let mut m: Model<f64> = Model::new(cfg, &mut rng).unwrap();
        let mut w1 = vec![0.0; 80];
        w1[0] = 2.0;
        m.params.set("head.fc1.w", Tensor::new(vec![80, 1], w1).unwrap()).unwrap();
        m.params.set("head.fc1.b", Tensor::vector(vec![0.5]).unwrap()).unwrap();
        m.params.set("head.out.w", Tensor::new(vec![1, 1], vec![-1.5]).unwrap()).unwrap();
        m.params.set("head.out.b", Tensor::vector(vec![0.25]).unwrap()).unwrap();
        let mut s = sample(&mut rng, [2, 1, 1]);
        s.audio = Tensor::new(vec![2, 80], (0..160).map(|i| if i % 80 == 0 { (i / 80) as f32 + 1.0 } else { 0.0 }).collect()).unwrap();
        // mean of the first channel is 1.5; hidden = relu(2 * 1.5 + 0.5) = 3.5
        let want = 1.0 / (1.0 + (-(-1.5 * 3.5 + 0.25f64)).exp());
        assert!((m.predict_sample(&s).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn mean_encoder_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m: Model<f64> = Model::new(config(EncoderKind::Mean, Task::Regression, "l", 8, 1), &mut rng).unwrap();
        let s = sample(&mut rng, [1, 1, 9]);
        let text: Tensor<f64> = s.text.cast();
        let inputs = [None, None, Some(ModalityInput { frames: &text, length: 9 })];
        let mut tape = Tape::with_params(&m.params);
        let e = m.embed(&mut tape, &inputs, Mode::Eval, &mut rng).unwrap();
        for c in 0..300 {
            let oracle: f64 = (0..9).map(|r| text.row(r)[c]).sum::<f64>() / 9.0;
            assert!((tape.value(e).data()[c] - oracle).abs() < 1e-12);
        }
        let doubled = Tensor::from_rows(&[vec![0.0; 300], vec![2.0; 300]]).unwrap();
        let inputs = [None, None, Some(ModalityInput { frames: &doubled, length: 2 })];
        let mut tape = Tape::with_params(&m.params);
        let e = m.embed(&mut tape, &inputs, Mode::Eval, &mut rng).unwrap();
        assert!(tape.value(e).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn padding_does_not_change_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for kind in [EncoderKind::Ccnn, EncoderKind::Lstm] {
            for readout in [Readout::Last, Readout::Max] {
                let mut cfg = config(kind, Task::Regression, "a,v,l", 6, 3);
                cfg.encoder.readout = readout;
                let m: Model<f64> = Model::new(cfg, &mut rng).unwrap();
                let s = sample(&mut rng, [5, 3, 2]);
                let single = m.predict_sample(&s).unwrap();
                let long = sample(&mut rng, [11, 9, 7]);
                let samples = vec![s, long];
                let batch = PaddedBatch::new(&samples, vec![0, 1]);
                let batched = m.predict_batch(&batch).unwrap();
                assert!((batched[0] - single).abs() < 1e-12, "{kind} {readout}");
                assert_eq!(batched[1], m.predict_sample(&samples[1]).unwrap());
            }
        }
    }

    #[test]
    fn config_kv_round_trip() {
        let mut cfg = config(EncoderKind::Lstm, Task::Regression, "a,l", 16, 2);
        cfg.standardize = true;
        let back = ModelConfig::from_kv(KeyValues::parse(&cfg.to_kv().serialize()).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn standardization_is_fitted_per_modality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut cfg = config(EncoderKind::Ccnn, Task::Regression, "a,v", 4, 1);
        cfg.standardize = true;
        let mut m: Model<f32> = Model::new(cfg, &mut rng).unwrap();
        let samples: Vec<_> = (0..4).map(|_| sample(&mut rng, [3, 2, 1])).collect();
        m.fit_standardization(&samples);
        assert_eq!(m.stats.len(), 2);
        let a = &m.stats[&Modality::Audio];
        assert_eq!(a.mean.len(), 80);
        let applied = a.apply(&samples[0].audio);
        assert!(applied.is_finite());
    }
}
