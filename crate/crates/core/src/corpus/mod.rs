//! Interview ingestion, tri-modal sentence assembly, batching, patient
//! splits, and the synthetic corpus generator.

mod assemble;
mod batch;
mod synth;

pub use assemble::{assemble_sentences, AssemblyConfig, Modalities, Modality, TextResources};
pub use batch::{batch_sentences, batches_in_order, PaddedBatch, PaddedModality};
pub use synth::{generate_synthetic_corpus, planted_parameters, PlantedParameters, MIN_SYNTH_PATIENTS};

use std::fmt;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rayon::prelude::*;
use thiserror::Error;

use crate::dsp::{read_wav, AudioClip, DspError};
use crate::numerics::Tensor;
use crate::text::TextError;
use crate::visual::{load_keypoints, KeypointTrack, VisualError};

pub const MAX_PHQ: u8 = 24;
/// PHQ score at or above which an interview is labelled MDD.
pub const MDD_THRESHOLD: u8 = 10;
pub const LABELS_FILE: &str = "labels.csv";
pub const SPLIT_FILE: &str = "split.tsv";
pub const VECTORS_FILE: &str = "word_vectors.txt";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{file}: {detail}")]
    Ingestion { file: String, detail: String },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Audio(#[from] DspError),
    #[error(transparent)]
    Visual(#[from] VisualError),
    #[error(transparent)]
    Text(#[from] TextError),
}

impl CorpusError {
    pub(crate) fn ingestion(file: &Path, detail: impl ToString) -> Self {
        CorpusError::Ingestion { file: file.display().to_string(), detail: detail.to_string() }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io { path: path.display().to_string(), source }
    }
}

/// Interview-level labels; `mdd` is derived from the PHQ score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Label {
    phq: u8,
}

impl Label {
    pub fn new(phq: u8) -> Result<Self, CorpusError> {
        if phq > MAX_PHQ {
            return Err(CorpusError::Argument(format!("PHQ score {phq} outside 0..={MAX_PHQ}")));
        }
        Ok(Label { phq })
    }

    pub fn phq(self) -> u8 {
        self.phq
    }

    pub fn mdd(self) -> bool {
        self.phq >= MDD_THRESHOLD
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TranscriptRow {
    pub start: f64,
    pub stop: f64,
    pub speaker: String,
    pub text: String,
}

#[derive(Clone, Debug)]
pub struct InterviewRecord {
    pub patient_id: String,
    /// `None` for unlabelled interviews (single-interview scoring).
    pub label: Option<Label>,
    pub audio: Option<AudioClip>,
    pub keypoints: Option<KeypointTrack>,
    pub transcript: Vec<TranscriptRow>,
}

/// One time-aligned tri-modal sentence. Feature tensors are `[frames, width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceSample {
    pub patient_id: String,
    pub sentence_index: usize,
    pub audio: Tensor<f32>,
    pub visual: Tensor<f32>,
    pub text: Tensor<f32>,
    pub label: Option<Label>,
}

impl SentenceSample {
    pub fn id(&self) -> String {
        format!("{}_{}", self.patient_id, self.sentence_index)
    }

    pub fn features(&self, modality: Modality) -> &Tensor<f32> {
        match modality {
            Modality::Audio => &self.audio,
            Modality::Visual => &self.visual,
            Modality::Linguistic => &self.text,
        }
    }
}

/// Reads `start_time,stop_time,speaker,value`; tab-separated files are
/// accepted as well.
pub fn load_transcript(path: &Path) -> Result<Vec<TranscriptRow>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::ingestion(path, e))?;
    let first = text.lines().next().ok_or_else(|| CorpusError::ingestion(path, "empty transcript"))?;
    let delimiter = if first.contains('\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new().delimiter(delimiter).flexible(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(|e| CorpusError::ingestion(path, e))?.iter().map(|h| h.trim().to_string()).collect();
    if header != ["start_time", "stop_time", "speaker", "value"] {
        return Err(CorpusError::ingestion(path, format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CorpusError::ingestion(path, format!("line {line}: {e}")))?;
        if rec.len() != 4 {
            return Err(CorpusError::ingestion(path, format!("line {line}: {} fields, expected 4", rec.len())));
        }
        let time = |j: usize| {
            rec[j]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CorpusError::ingestion(path, format!("line {line}: bad time {:?}", &rec[j])))
        };
        let (start, stop) = (time(0)?, time(1)?);
        if !(start < stop) {
            return Err(CorpusError::ingestion(path, format!("line {line}: stop {stop} is not after start {start}")));
        }
        rows.push(TranscriptRow { start, stop, speaker: rec[2].trim().to_string(), text: rec[3].to_string() });
    }
    Ok(rows)
}

pub fn write_transcript(path: &Path, rows: &[TranscriptRow]) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CorpusError::ingestion(path, e))?;
    let io = |e: csv::Error| CorpusError::ingestion(path, e);
    w.write_record(["start_time", "stop_time", "speaker", "value"]).map_err(io)?;
    for r in rows {
        w.write_record([format!("{:.3}", r.start), format!("{:.3}", r.stop), r.speaker.clone(), r.text.clone()]).map_err(io)?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

/// `patient_id,phq_score` rows.
pub fn load_labels(path: &Path) -> Result<IndexMap<String, Label>, CorpusError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CorpusError::ingestion(path, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| CorpusError::ingestion(path, e))?.iter().map(|h| h.trim().to_string()).collect();
    if header != ["patient_id", "phq_score"] {
        return Err(CorpusError::ingestion(path, format!("unexpected header {header:?}")));
    }
    let mut labels = IndexMap::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CorpusError::ingestion(path, format!("line {line}: {e}")))?;
        let id = rec.get(0).unwrap_or("").trim().to_string();
        let phq = rec
            .get(1)
            .and_then(|v| v.trim().parse::<u8>().ok())
            .ok_or_else(|| CorpusError::ingestion(path, format!("line {line}: bad PHQ score")))?;
        let label = Label::new(phq).map_err(|e| CorpusError::ingestion(path, format!("line {line}: {e}")))?;
        if id.is_empty() || labels.insert(id.clone(), label).is_some() {
            return Err(CorpusError::ingestion(path, format!("line {line}: empty or duplicate patient id {id:?}")));
        }
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &IndexMap<String, Label>) -> Result<(), CorpusError> {
    let mut out = String::from("patient_id,phq_score\n");
    for (id, l) in labels {
        out.push_str(&format!("{id},{}\n", l.phq()));
    }
    std::fs::write(path, out).map_err(|e| CorpusError::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            other => Err(CorpusError::Argument(format!("unknown split {other:?} (train, validation)"))),
        }
    }
}

/// Patient-level train/validation partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

impl SplitManifest {
    pub fn new(train: Vec<String>, validation: Vec<String>) -> Result<Self, CorpusError> {
        if let Some(id) = train.iter().find(|id| validation.contains(id)) {
            return Err(CorpusError::Argument(format!("patient {id} is in both splits")));
        }
        Ok(SplitManifest { train, validation })
    }

    pub fn patients(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
        }
    }

    /// One `patient_id<TAB>train|validation` line per patient.
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut out = String::new();
        for (ids, split) in [(&self.train, Split::Train), (&self.validation, Split::Validation)] {
            for id in ids {
                out.push_str(&format!("{id}\t{split}\n"));
            }
        }
        std::fs::write(path, out).map_err(|e| CorpusError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::ingestion(path, e))?;
        let (mut train, mut validation) = (Vec::new(), Vec::new());
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (id, split) =
                line.split_once('\t').ok_or_else(|| CorpusError::ingestion(path, format!("line {}: expected id<TAB>split", i + 1)))?;
            match split.trim().parse::<Split>().map_err(|e| CorpusError::ingestion(path, format!("line {}: {e}", i + 1)))? {
                Split::Train => train.push(id.trim().to_string()),
                Split::Validation => validation.push(id.trim().to_string()),
            }
        }
        Self::new(train, validation).map_err(|e| CorpusError::ingestion(path, e))
    }

    /// Every referenced patient must have a label.
    pub fn check_against(&self, labels: &IndexMap<String, Label>) -> Result<(), CorpusError> {
        match self.train.iter().chain(&self.validation).find(|id| !labels.contains_key(*id)) {
            Some(id) => Err(CorpusError::Argument(format!("split references unknown patient {id}"))),
            None => Ok(()),
        }
    }
}

/// Which interview files must be present.
#[derive(Clone, Copy, Debug)]
pub struct LoadOptions {
    pub audio: bool,
    pub visual: bool,
    pub sample_rate: u32,
    pub resample: bool,
}

pub fn interview_paths(dir: &Path, patient_id: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{patient_id}_AUDIO.wav")),
        dir.join(format!("{patient_id}_KEYPOINTS.csv")),
        dir.join(format!("{patient_id}_TRANSCRIPT.csv")),
    )
}

fn require(path: &Path) -> Result<(), CorpusError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CorpusError::ingestion(path, "missing file"))
    }
}

/// Loads one interview from explicit file paths. Modalities disabled in
/// `opts` are not read.
pub fn load_interview_files(
    patient_id: &str,
    audio: Option<&Path>,
    keypoints: Option<&Path>,
    transcript: &Path,
    label: Option<Label>,
    opts: LoadOptions,
) -> Result<InterviewRecord, CorpusError> {
    require(transcript)?;
    let audio = match (opts.audio, audio) {
        (false, _) => None,
        (true, None) => return Err(CorpusError::Argument("audio file required by the active modalities".into())),
        (true, Some(p)) => {
            require(p)?;
            Some(read_wav(p, opts.sample_rate, opts.resample).map_err(|e| CorpusError::ingestion(p, e))?)
        }
    };
    let keypoints = match (opts.visual, keypoints) {
        (false, _) => None,
        (true, None) => return Err(CorpusError::Argument("keypoints file required by the active modalities".into())),
        (true, Some(p)) => {
            require(p)?;
            Some(load_keypoints(p).map_err(|e| CorpusError::ingestion(p, e))?)
        }
    };
    let transcript = load_transcript(transcript)?;
    Ok(InterviewRecord { patient_id: patient_id.to_string(), label, audio, keypoints, transcript })
}

/// Loads `<dir>/<id>_{AUDIO.wav,KEYPOINTS.csv,TRANSCRIPT.csv}` where `<id>`
/// is the directory name, labelled from the corpus-level labels.
pub fn load_interview(dir: &Path, labels: &IndexMap<String, Label>, opts: LoadOptions) -> Result<InterviewRecord, CorpusError> {
    let id = dir.file_name().and_then(|n| n.to_str()).ok_or_else(|| CorpusError::ingestion(dir, "not an interview directory"))?;
    let label = *labels.get(id).ok_or_else(|| CorpusError::ingestion(dir, format!("no labels row for patient {id}")))?;
    let (audio, keypoints, transcript) = interview_paths(dir, id);
    load_interview_files(id, Some(&audio), Some(&keypoints), &transcript, Some(label), opts)
}

/// Corpus directory: `labels.csv`, `split.tsv` and one directory per patient.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub root: PathBuf,
    pub labels: IndexMap<String, Label>,
    pub manifest: SplitManifest,
}

impl Corpus {
    pub fn open(root: &Path) -> Result<Self, CorpusError> {
        let labels = load_labels(&root.join(LABELS_FILE))?;
        let manifest = SplitManifest::load(&root.join(SPLIT_FILE))?;
        manifest.check_against(&labels)?;
        Ok(Corpus { root: root.to_path_buf(), labels, manifest })
    }

    /// Assembled sentences of every patient in `split`, in manifest order.
    /// Interviews are ingested in parallel; the result order is fixed.
    pub fn load_split(&self, split: Split, cfg: &AssemblyConfig, resources: &TextResources) -> Result<Vec<SentenceSample>, CorpusError> {
        let opts = cfg.load_options();
        let per_patient = self
            .manifest
            .patients(split)
            .par_iter()
            .map(|id| {
                let record = load_interview(&self.root.join(id), &self.labels, opts)?;
                assemble_sentences(&record, cfg, resources).map(|(samples, _)| samples)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(per_patient.into_iter().flatten().collect())
    }
}
