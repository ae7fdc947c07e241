//! Deterministic synthetic interviews whose acoustic, facial and lexical
//! content depends on a planted severity score.

use std::f64::consts::PI;
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{
    interview_paths, write_labels, write_transcript, CorpusError, Label, SplitManifest, TranscriptRow, LABELS_FILE, MAX_PHQ, SPLIT_FILE,
    VECTORS_FILE,
};
use crate::dsp::{write_wav, AudioClip};
use crate::seed::derive_rng;
use crate::text::{spell_number, EmbeddingTable};
use crate::visual::{save_keypoints, KeypointFrame, KeypointTrack, NOMINAL_FPS, N_POINTS};

pub const MIN_SYNTH_PATIENTS: usize = 4;
const SAMPLE_RATE: u32 = 16_000;
const WORD_DIM: usize = 300;
const SNR_DB: f64 = 15.0;
const HARMONICS: usize = 5;

const CALM_WORDS: [&str; 50] = [
    "good",
    "happy",
    "friends",
    "family",
    "enjoy",
    "weekend",
    "travel",
    "music",
    "laugh",
    "beach",
    "garden",
    "cooking",
    "hiking",
    "proud",
    "excited",
    "relaxed",
    "sunny",
    "vacation",
    "fun",
    "love",
    "playing",
    "great",
    "nice",
    "calm",
    "hopeful",
    "energetic",
    "dancing",
    "movies",
    "party",
    "wonderful",
    "smile",
    "together",
    "visit",
    "outdoors",
    "sports",
    "reading",
    "beautiful",
    "grateful",
    "peaceful",
    "cheerful",
    "motivated",
    "success",
    "celebrate",
    "birthday",
    "holiday",
    "concert",
    "adventure",
    "bright",
    "warm",
    "confident",
];

const LOW_WORDS: [&str; 50] = [
    "tired",
    "sad",
    "alone",
    "sleep",
    "hard",
    "worried",
    "nothing",
    "lonely",
    "empty",
    "hopeless",
    "anxious",
    "stressed",
    "exhausted",
    "crying",
    "guilty",
    "worthless",
    "bored",
    "numb",
    "pain",
    "lost",
    "afraid",
    "angry",
    "upset",
    "heavy",
    "stuck",
    "dark",
    "quiet",
    "weak",
    "failure",
    "regret",
    "insomnia",
    "appetite",
    "isolated",
    "overwhelmed",
    "miserable",
    "difficult",
    "struggle",
    "restless",
    "awake",
    "fatigue",
    "nervous",
    "depressed",
    "burden",
    "broken",
    "drained",
    "unmotivated",
    "gloomy",
    "doubt",
    "fear",
    "hurt",
];

const PROMPTS: [&str; 8] = [
    "How are you doing today?",
    "Where are you from originally?",
    "What do you do to relax?",
    "How have you been feeling lately?",
    "Tell me about your last vacation.",
    "How easy is it for you to get a good night's sleep?",
    "What are you most proud of?",
    "Can you tell me more about that?",
];

/// Planted generator parameters for a severity score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantedParameters {
    /// Peak amplitude of voiced speech.
    pub amplitude: f64,
    /// Relative depth of pitch excursions around the sentence's base pitch.
    pub pitch_depth: f64,
    /// Syllable rate in Hz; the loudness envelope pulses at this rate.
    pub speech_rate: f64,
    /// Scale of mouth, brow and head movement.
    pub motion_amplitude: f64,
    /// Probability that a token is drawn from the low-mood vocabulary.
    pub low_word_weight: f64,
}

pub fn planted_parameters(severity: u8) -> PlantedParameters {
    let r = severity.min(MAX_PHQ) as f64 / MAX_PHQ as f64;
    PlantedParameters {
        amplitude: 0.2 * (1.0 - 0.2 * r),
        pitch_depth: 0.15 * (1.0 - 0.85 * r),
        speech_rate: 5.0 - 2.5 * r,
        motion_amplitude: 1.0 - 0.75 * r,
        low_word_weight: r,
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Neutral 68-point face in millimetres, nose bridge near the origin.
fn face_template() -> Vec<[f64; 3]> {
    let mut pts = Vec::with_capacity(N_POINTS);
    let relief = |x: f64, y: f64| 30.0 * (1.0 - (x * x + y * y) / 10_000.0);
    for i in 0..17 {
        let x = -70.0 + 140.0 * i as f64 / 16.0;
        let y = 10.0 - 70.0 * (1.0 - (x / 75.0).powi(2)).max(0.0).sqrt();
        pts.push([x, y, relief(x, y) - 15.0]);
    }
    for side in [-1.0, 1.0] {
        for i in 0..5 {
            let x = side * (15.0 + 40.0 * if side < 0.0 { 4 - i } else { i } as f64 / 4.0);
            let y = 45.0 + 5.0 * (PI * (x.abs() - 15.0) / 40.0).sin();
            pts.push([x, y, relief(x, y)]);
        }
    }
    for i in 0..4 {
        let y = 35.0 - 10.0 * i as f64;
        pts.push([0.0, y, relief(0.0, y) + 5.0 * i as f64]);
    }
    for i in 0..5 {
        let x = -15.0 + 7.5 * i as f64;
        pts.push([x, 0.0, relief(x, 0.0) + 10.0]);
    }
    for cx in [-35.0, 35.0] {
        for i in 0..6 {
            let a = PI * i as f64 / 3.0;
            let (x, y) = (cx - 12.0 * a.cos(), 25.0 + 5.0 * a.sin());
            pts.push([x, y, relief(x, y) - 3.0]);
        }
    }
    for (n, rx, ry) in [(12, 25.0, 10.0), (8, 15.0, 4.0)] {
        for i in 0..n {
            let a = 2.0 * PI * i as f64 / n as f64;
            let (x, y) = (-rx * a.cos(), -30.0 + ry * a.sin());
            pts.push([x, y, relief(x, y) + 2.0]);
        }
    }
    debug_assert_eq!(pts.len(), N_POINTS);
    pts
}

struct Spoken {
    start: f64,
    stop: f64,
    gain: f64,
    motion: f64,
    phase: [f64; 5],
    rates: [f64; 2],
    f0: f64,
    syllable_rate: f64,
}

struct Patient {
    id: String,
    severity: u8,
}

fn sentence_tokens(rng: &mut ChaCha8Rng, low_weight: f64) -> String {
    let n = rng.gen_range(4..=9);
    let mut words: Vec<String> = (0..n)
        .map(|_| {
            let list = if rng.gen_bool(low_weight) { &LOW_WORDS } else { &CALM_WORDS };
            list[rng.gen_range(0..list.len())].to_string()
        })
        .collect();
    // surface forms that exercise canonicalization
    match rng.gen_range(0..10) {
        0 => words.insert(0, ["Bout", "Till", "Lookin"][rng.gen_range(0..3)].to_string()),
        1 => words.push(rng.gen_range(1..100).to_string()),
        _ => {}
    }
    let mut text = words.join(" ");
    if let Some(first) = text.get(0..1) {
        text = first.to_uppercase() + &text[1..];
    }
    text.push('.');
    text
}

fn write_patient(dir: &Path, patient: &Patient, mut rng: ChaCha8Rng) -> Result<(), CorpusError> {
    let params = planted_parameters(patient.severity);
    let n_sentences = rng.gen_range(20..=40);
    let jitter = Normal::<f64>::new(0.0, 0.3).expect("valid normal");

    let mut rows = Vec::new();
    let mut spoken = Vec::new();
    let mut t = 0.2;
    for k in 0..n_sentences {
        rows.push(TranscriptRow { start: t, stop: t + 0.4, speaker: "Ellie".into(), text: PROMPTS[k % PROMPTS.len()].into() });
        t += 0.5;
        let d = rng.gen_range(1.0..2.0);
        let (start, stop) = ((t * 1000.0).round() / 1000.0, ((t + d) * 1000.0).round() / 1000.0);
        rows.push(TranscriptRow { start, stop, speaker: "Participant".into(), text: sentence_tokens(&mut rng, params.low_word_weight) });
        spoken.push(Spoken {
            start,
            stop,
            gain: jitter.sample(&mut rng).exp(),
            motion: jitter.sample(&mut rng).exp(),
            phase: [(); 5].map(|_| rng.gen_range(0.0..2.0 * PI)),
            rates: [rng.gen_range(2.0..4.0), rng.gen_range(5.0..8.0)],
            f0: rng.gen_range(100.0..220.0),
            syllable_rate: params.speech_rate * rng.gen_range(0.7..1.3),
        });
        t = stop + 0.2;
    }
    let total = t + 0.2;

    // audio: harmonic tone with pitch excursions and a syllabic loudness
    // envelope inside participant rows
    let sr = SAMPLE_RATE as f64;
    let n_samples = (total * sr).ceil() as usize;
    let mut audio: Vec<f64> = (0..n_samples).map(|_| 0.002 * gaussian(&mut rng)).collect();
    let harmonic_rms = ((1..=HARMONICS).map(|h| 1.0 / (h * h) as f64).sum::<f64>() / 2.0).sqrt();
    for s in &spoken {
        let amp = params.amplitude * s.gain;
        let noise_sd = amp * harmonic_rms * 10f64.powf(-SNR_DB / 20.0);
        let (a, b) = ((s.start * sr).round() as usize, ((s.stop * sr).round() as usize).min(n_samples));
        let mut phase = 0.0;
        for (i, x) in audio[a..b].iter_mut().enumerate() {
            let tt = i as f64 / sr;
            let wobble = 0.6 * (2.0 * PI * s.rates[0] * tt + s.phase[0]).sin() + 0.4 * (2.0 * PI * s.rates[1] * tt + s.phase[1]).sin();
            phase += 2.0 * PI * s.f0 * (1.0 + params.pitch_depth * wobble) / sr;
            let edge = (tt / 0.01).min((b - a - i) as f64 / sr / 0.01).min(1.0);
            let syllable = 0.5 - 0.5 * (2.0 * PI * s.syllable_rate * tt + s.phase[4]).cos();
            let voiced: f64 = (1..=HARMONICS).map(|h| (h as f64 * phase).sin() / h as f64).sum();
            *x += amp * edge * syllable * voiced + noise_sd * gaussian(&mut rng);
        }
    }
    let clip = AudioClip::new(audio.iter().map(|&v| v.clamp(-1.0, 1.0) as f32).collect(), SAMPLE_RATE)?;

    // keypoints: per-patient face scale, head pose and speech-driven motion
    let template = face_template();
    let scale = rng.gen_range(0.9..1.1);
    let shape: Vec<[f64; 3]> = template.iter().map(|p| p.map(|c| c * scale)).collect();
    let seat = [rng.gen_range(-40.0..40.0), rng.gen_range(-20.0..20.0), rng.gen_range(600.0..900.0)];
    let head_phase = [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)];
    let n_frames = (total * NOMINAL_FPS).floor() as usize;
    let mut frames = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let tt = f as f64 / NOMINAL_FPS;
        let active = spoken.iter().find(|s| tt >= s.start && tt < s.stop);
        let m = params.motion_amplitude * active.map_or(0.2, |s| s.motion);
        let (mouth, brow) = match active {
            Some(s) => {
                (6.0 * m * (0.5 + 0.5 * (2.0 * PI * 4.5 * tt + s.phase[2]).sin()), 3.0 * m * (2.0 * PI * 1.3 * tt + s.phase[3]).sin())
            }
            None => (0.0, 0.0),
        };
        let nod = 0.08 * m * (2.0 * PI * 0.7 * tt + head_phase[0]).sin();
        let yaw = 0.05 * m * (2.0 * PI * 0.4 * tt + head_phase[1]).sin();
        let drift = [5.0 * (0.1 * tt).sin(), 3.0 * (0.13 * tt).cos(), 0.0];
        let points = shape
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut q = *p;
                if (17..27).contains(&i) {
                    q[1] += brow;
                }
                if i >= 48 && q[1] < -30.0 * scale {
                    q[1] -= mouth;
                } else if i >= 48 {
                    q[1] -= 0.2 * mouth;
                }
                let (y, z) = (q[1] * nod.cos() - q[2] * nod.sin(), q[1] * nod.sin() + q[2] * nod.cos());
                let (x, z) = (q[0] * yaw.cos() + z * yaw.sin(), -q[0] * yaw.sin() + z * yaw.cos());
                let noisy = [x, y, z].map(|c| c + 0.3 * gaussian(&mut rng));
                [0, 1, 2].map(|a| ((noisy[a] + seat[a] + drift[a]) * 1000.0).round() / 1000.0)
            })
            .collect();
        frames.push(KeypointFrame::new(f as f64 / NOMINAL_FPS, points, None)?);
    }

    std::fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
    let (audio_path, kp_path, tr_path) = interview_paths(dir, &patient.id);
    write_wav(&audio_path, &clip)?;
    save_keypoints(&kp_path, &KeypointTrack::new(frames)?)?;
    write_transcript(&tr_path, &rows)
}

fn word_vectors(rng: &mut ChaCha8Rng) -> EmbeddingTable {
    let sd = 1.0 / (WORD_DIM as f64).sqrt();
    let mut direction: Vec<f64> = (0..WORD_DIM).map(|_| gaussian(rng)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);

    let mut neutral: Vec<String> = ["about", "until", "looking"].map(String::from).to_vec();
    for n in 0..100u64 {
        for w in spell_number(n).expect("small number").split(' ') {
            if !neutral.iter().any(|x| x == w) {
                neutral.push(w.to_string());
            }
        }
    }
    let mut table = EmbeddingTable::new(WORD_DIM);
    let lists: [(&[&str], f64); 2] = [(&CALM_WORDS, 0.3), (&LOW_WORDS, -0.3)];
    let neutral_refs: Vec<&str> = neutral.iter().map(String::as_str).collect();
    for (words, offset) in lists.into_iter().chain([(neutral_refs.as_slice(), 0.0)]) {
        for w in words {
            let v = direction.iter().map(|d| (offset * d + sd * gaussian(rng)) as f32).collect();
            table.insert(*w, v).expect("unique synthetic vocabulary");
        }
    }
    table
}

/// Stratified by MDD label: a quarter of the patients (rounded) go to
/// validation, shared between strata in proportion to their size.
fn stratified_split(patients: &[Patient], rng: &mut ChaCha8Rng) -> SplitManifest {
    let n = patients.len();
    let n_val = (n as f64 / 4.0).round() as usize;
    let (mut pos, mut neg): (Vec<&Patient>, Vec<&Patient>) = patients.iter().partition(|p| p.severity >= super::MDD_THRESHOLD);
    pos.shuffle(rng);
    neg.shuffle(rng);
    let val_pos = ((n_val as f64 * pos.len() as f64 / n as f64).round() as usize).min(pos.len()).min(n_val);
    let val_neg = (n_val - val_pos).min(neg.len());
    let val_pos = n_val - val_neg;
    let mut validation: Vec<String> = pos[..val_pos].iter().chain(&neg[..val_neg]).map(|p| p.id.clone()).collect();
    validation.sort();
    let mut train: Vec<String> = patients.iter().map(|p| p.id.clone()).filter(|id| !validation.contains(id)).collect();
    train.sort();
    SplitManifest { train, validation }
}

/// Writes a labelled synthetic corpus (labels, split manifest, word vectors
/// and one directory per patient) and returns its split.
pub fn generate_synthetic_corpus(n_patients: usize, seed: u64, out_dir: &Path) -> Result<SplitManifest, CorpusError> {
    if n_patients < MIN_SYNTH_PATIENTS {
        return Err(CorpusError::Argument(format!("at least {MIN_SYNTH_PATIENTS} patients required, got {n_patients}")));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| CorpusError::io(out_dir, e))?;
    let mut rng = derive_rng(seed, "synth/labels");
    let width = n_patients.to_string().len().max(3);
    let patients: Vec<Patient> =
        (0..n_patients).map(|i| Patient { id: format!("S{:0width$}", i + 1), severity: rng.gen_range(0..=MAX_PHQ) }).collect();

    let labels: IndexMap<String, Label> = patients.iter().map(|p| (p.id.clone(), Label::new(p.severity).expect("in range"))).collect();
    write_labels(&out_dir.join(LABELS_FILE), &labels)?;
    word_vectors(&mut derive_rng(seed, "synth/vectors")).save(&out_dir.join(VECTORS_FILE))?;
    let manifest = stratified_split(&patients, &mut derive_rng(seed, "synth/split"));
    manifest.save(&out_dir.join(SPLIT_FILE))?;

    use rayon::prelude::*;
    patients
        .par_iter()
        .map(|p| write_patient(&out_dir.join(&p.id), p, derive_rng(seed, &format!("synth/patient/{}", p.id))))
        .collect::<Result<Vec<()>, _>>()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_schedule_is_monotone() {
        for s in 0..MAX_PHQ {
            let (a, b) = (planted_parameters(s), planted_parameters(s + 1));
            assert!(b.amplitude < a.amplitude);
            assert!(b.speech_rate < a.speech_rate);
            assert!(b.pitch_depth < a.pitch_depth);
            assert!(b.motion_amplitude < a.motion_amplitude);
            assert!(b.low_word_weight > a.low_word_weight);
        }
        assert!(planted_parameters(24).amplitude > 0.0);
    }

    #[test]
    fn template_has_68_distinct_points() {
        let t = face_template();
        assert_eq!(t.len(), N_POINTS);
        for i in 0..t.len() {
            for j in 0..i {
                assert!(t[i] != t[j], "points {i} and {j} coincide");
            }
        }
    }

    #[test]
    fn split_arithmetic() {
        let mut rng = derive_rng(1, "t");
        for (n, val) in [(4, 1), (8, 2), (60, 15), (10, 3)] {
            let patients: Vec<Patient> = (0..n).map(|i| Patient { id: format!("p{i:02}"), severity: (i * 7 % 25) as u8 }).collect();
            let m = stratified_split(&patients, &mut rng);
            assert_eq!((m.train.len(), m.validation.len()), (n - val, val));
        }
    }

    #[test]
    fn too_few_patients() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(generate_synthetic_corpus(2, 1, dir.path()), Err(CorpusError::Argument(_))));
    }
}
