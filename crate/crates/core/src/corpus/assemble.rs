use std::fmt;
use std::str::FromStr;

use super::{CorpusError, InterviewRecord, LoadOptions, SentenceSample};
use crate::dsp::{AudioFeatureKind, AudioFeaturizer, DspError, FrameSpec, MelBank};
use crate::numerics::Tensor;
use crate::text::{canonicalize, embed_tokens, CanonicalizationLexicon, EmbeddingTable, SentenceVectors};
use crate::visual::{slice_track, VisualError, FRAME_WIDTH};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Modality {
    Audio,
    Visual,
    Linguistic,
}

impl Modality {
    /// Fusion order.
    pub const ALL: [Modality; 3] = [Modality::Audio, Modality::Visual, Modality::Linguistic];

    pub fn token(self) -> &'static str {
        match self {
            Modality::Audio => "a",
            Modality::Visual => "v",
            Modality::Linguistic => "l",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Visual => "visual",
            Modality::Linguistic => "linguistic",
        }
    }
}

/// Non-empty subset of the three modalities, iterated in fusion order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Modalities {
    mask: [bool; 3],
}

impl Modalities {
    pub fn all() -> Self {
        Modalities { mask: [true; 3] }
    }

    pub fn only(m: Modality) -> Self {
        let mut mask = [false; 3];
        mask[Modality::ALL.iter().position(|&x| x == m).expect("known modality")] = true;
        Modalities { mask }
    }

    pub fn contains(&self, m: Modality) -> bool {
        Modality::ALL.iter().zip(self.mask).any(|(&x, on)| on && x == m)
    }

    pub fn iter(&self) -> impl Iterator<Item = Modality> + '_ {
        Modality::ALL.into_iter().zip(self.mask).filter(|(_, on)| *on).map(|(m, _)| m)
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&on| on).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl FromStr for Modalities {
    type Err = CorpusError;

    /// Comma-separated tokens `a`, `v`, `l` (or `audio`, `visual`,
    /// `linguistic`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut mask = [false; 3];
        for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let i = Modality::ALL
                .iter()
                .position(|m| m.token() == tok || m.name() == tok)
                .ok_or_else(|| CorpusError::Argument(format!("unknown modality {tok:?}; valid tokens: a, v, l")))?;
            if mask[i] {
                return Err(CorpusError::Argument(format!("modality {tok:?} listed twice")));
            }
            mask[i] = true;
        }
        if !mask.iter().any(|&b| b) {
            return Err(CorpusError::Argument("at least one modality is required; valid tokens: a, v, l".into()));
        }
        Ok(Modalities { mask })
    }
}

impl fmt::Display for Modalities {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tokens: Vec<&str> = self.iter().map(Modality::token).collect();
        f.write_str(&tokens.join(","))
    }
}

/// Settings that turn an interview into sentence samples.
#[derive(Clone, Debug)]
pub struct AssemblyConfig {
    pub participant_label: String,
    pub featurizer: AudioFeaturizer,
    pub sample_rate: u32,
    pub resample: bool,
    /// Longer sentences keep only their final stretch of audio.
    pub max_sentence_seconds: f64,
    pub confidence_threshold: f64,
    /// Inactive modalities are neither read nor featurized; their sample
    /// slot holds a single zero frame.
    pub modalities: Modalities,
}

impl Default for AssemblyConfig {
    /// 80-band log-mel over 0 to 8 kHz at 16 kHz, all modalities.
    fn default() -> Self {
        let spec = FrameSpec::default();
        let bank = MelBank::new(80, spec.fft_size, 16_000, 0.0, 8000.0).expect("default mel bank");
        AssemblyConfig {
            participant_label: "Participant".into(),
            featurizer: AudioFeaturizer::new(spec, bank, AudioFeatureKind::LogMel, 13).expect("default featurizer"),
            sample_rate: 16_000,
            resample: false,
            max_sentence_seconds: 60.0,
            confidence_threshold: 0.5,
            modalities: Modalities::all(),
        }
    }
}

impl AssemblyConfig {
    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            audio: self.modalities.contains(Modality::Audio),
            visual: self.modalities.contains(Modality::Visual),
            sample_rate: self.sample_rate,
            resample: self.resample,
        }
    }
}

pub struct TextResources {
    pub lexicon: CanonicalizationLexicon,
    pub embeddings: EmbeddingTable,
    /// Fixed sentence vectors keyed by sample id; when set they replace the
    /// token sequence with a single row.
    pub sentence_vectors: Option<SentenceVectors>,
}

impl TextResources {
    pub fn width(&self) -> usize {
        match &self.sentence_vectors {
            Some(sv) => sv.dimension(),
            None => self.embeddings.dimension(),
        }
    }
}

fn to_f32(t: Tensor<f64>) -> Tensor<f32> {
    t.cast()
}

fn zero_frame(width: usize) -> Tensor<f32> {
    Tensor::zeros(&[1, width])
}

/// One sample per participant row. Returns the samples and the number of
/// rows skipped because canonicalization left no tokens.
pub fn assemble_sentences(
    record: &InterviewRecord,
    cfg: &AssemblyConfig,
    text: &TextResources,
) -> Result<(Vec<SentenceSample>, usize), CorpusError> {
    let want = |m| cfg.modalities.contains(m);
    let audio = match (&record.audio, want(Modality::Audio)) {
        (Some(a), true) => Some(a),
        (None, true) => return Err(CorpusError::Argument(format!("{}: audio modality active but no audio", record.patient_id))),
        _ => None,
    };
    let track = match (&record.keypoints, want(Modality::Visual)) {
        (Some(k), true) => Some(k.drop_low_confidence(cfg.confidence_threshold)),
        (None, true) => return Err(CorpusError::Argument(format!("{}: visual modality active but no keypoints", record.patient_id))),
        _ => None,
    };

    let mut samples = Vec::new();
    let mut skipped = 0;
    let rows = record.transcript.iter().filter(|r| r.speaker == cfg.participant_label);
    for (index, row) in rows.enumerate() {
        let sentence = canonicalize(&row.text, &text.lexicon)?;
        if sentence.tokens.is_empty() {
            skipped += 1;
            continue;
        }
        let sample_id = format!("{}_{index}", record.patient_id);
        let text_features = if !want(Modality::Linguistic) {
            zero_frame(text.width())
        } else if let Some(sv) = &text.sentence_vectors {
            Tensor::new(vec![1, sv.dimension()], sv.get(&sample_id)?.to_vec()).expect("non-empty vector")
        } else {
            embed_tokens(&sentence, &text.embeddings)?
        };
        let audio_features = match audio {
            None => zero_frame(cfg.featurizer.width()),
            Some(clip) => {
                let mut clip = clip.slice(row.start, row.stop);
                if clip.duration() > cfg.max_sentence_seconds {
                    clip = clip.tail(cfg.max_sentence_seconds);
                }
                match cfg.featurizer.featurize(&clip) {
                    Ok(f) => to_f32(f),
                    // shorter than one analysis frame
                    Err(DspError::Input(_)) => zero_frame(cfg.featurizer.width()),
                    Err(e) => return Err(e.into()),
                }
            }
        };
        let visual_features = match &track {
            None => zero_frame(FRAME_WIDTH),
            Some(track) => match slice_track(track, row.start, row.stop) {
                Ok(f) => to_f32(f),
                Err(VisualError::EmptySegment { .. }) => zero_frame(FRAME_WIDTH),
                Err(e) => return Err(e.into()),
            },
        };
        samples.push(SentenceSample {
            patient_id: record.patient_id.clone(),
            sentence_index: index,
            audio: audio_features,
            visual: visual_features,
            text: text_features,
            label: record.label,
        });
    }
    if skipped > 0 {
        log::info!("{}: skipped {skipped} sentence(s) with no tokens", record.patient_id);
    }
    Ok((samples, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, TranscriptRow};
    use crate::dsp::AudioClip;
    use crate::visual::{KeypointFrame, KeypointTrack, N_POINTS};

    fn config(modalities: Modalities) -> AssemblyConfig {
        AssemblyConfig { modalities, ..AssemblyConfig::default() }
    }

    fn resources() -> TextResources {
        let mut table = EmbeddingTable::new(4);
        table.insert("hello", vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        TextResources { lexicon: CanonicalizationLexicon::default(), embeddings: table, sentence_vectors: None }
    }

    fn record(phq: u8) -> InterviewRecord {
        let frames = (0..150)
            .map(|i| {
                let pts = (0..N_POINTS).map(|p| [p as f64, (p * p) as f64 * 0.1, 1.0 + (i as f64) * 0.01]).collect();
                KeypointFrame::new(i as f64 / 30.0, pts, None).unwrap()
            })
            .collect();
        let row =
            |start: f64, stop: f64, speaker: &str, text: &str| TranscriptRow { start, stop, speaker: speaker.into(), text: text.into() };
        InterviewRecord {
            patient_id: "P1".into(),
            label: Some(Label::new(phq).unwrap()),
            audio: Some(AudioClip::new((0..80_000).map(|i| (i as f32 * 0.07).sin() * 0.1).collect(), 16_000).unwrap()),
            keypoints: Some(KeypointTrack::new(frames).unwrap()),
            transcript: vec![
                row(0.0, 0.4, "Ellie", "hi"),
                row(0.5, 1.5, "Participant", "Hello there"),
                row(1.5, 1.9, "Ellie", "and?"),
                row(2.0, 2.5, "Ellie", "go on"),
                row(2.6, 3.2, "Participant", "Bout 24"),
                row(3.2, 3.4, "Ellie", "ok"),
                row(3.5, 4.9, "Participant", "hello"),
                row(4.9, 4.95, "Ellie", "hm"),
            ],
        }
    }

    #[test]
    fn participant_rows_only_with_weak_labels() {
        let (samples, skipped) = assemble_sentences(&record(10), &config(Modalities::all()), &resources()).unwrap();
        assert_eq!((samples.len(), skipped), (3, 0));
        assert!(samples.iter().all(|s| s.label.unwrap().mdd() && s.label.unwrap().phq() == 10));
        // a 1.0 s slice at 16 kHz with 25 ms / 10 ms framing
        assert_eq!(samples[0].audio.shape(), &[98, 80]);
        assert_eq!(samples[0].visual.shape(), &[30, FRAME_WIDTH]);
        assert_eq!(samples[1].text.shape(), &[3, 4]);
        assert_eq!(samples[0].text.row(0), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_token_rows_are_skipped_and_counted() {
        let mut r = record(3);
        r.transcript[1].text = "...".into();
        let (samples, skipped) = assemble_sentences(&r, &config(Modalities::all()), &resources()).unwrap();
        assert_eq!((samples.len(), skipped), (2, 1));
        assert_eq!(samples[0].sentence_index, 1);
    }

    #[test]
    fn empty_visual_slice_becomes_zero_frame() {
        let mut r = record(3);
        r.transcript[6].start = 5.5;
        r.transcript[6].stop = 6.0;
        let (samples, _) = assemble_sentences(&r, &config(Modalities::all()), &resources()).unwrap();
        assert_eq!(samples[2].visual.shape(), &[1, FRAME_WIDTH]);
        assert!(samples[2].visual.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inactive_modalities_are_not_required() {
        let mut r = record(3);
        r.audio = None;
        r.keypoints = None;
        let cfg = config("l".parse().unwrap());
        let (samples, _) = assemble_sentences(&r, &cfg, &resources()).unwrap();
        assert_eq!(samples[0].audio.shape(), &[1, 80]);
        assert!(assemble_sentences(&r, &config(Modalities::all()), &resources()).is_err());
    }

    #[test]
    fn modality_parsing() {
        assert_eq!("a,v,l".parse::<Modalities>().unwrap(), Modalities::all());
        assert_eq!("l,a".parse::<Modalities>().unwrap().to_string(), "a,l");
        let err = "x".parse::<Modalities>().unwrap_err().to_string();
        assert!(err.contains("a, v, l"), "{err}");
        assert!("".parse::<Modalities>().is_err());
        assert!("a,a".parse::<Modalities>().is_err());
    }
}
