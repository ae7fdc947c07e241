//! Frame-level acoustic features: short-time power spectra, HTK mel
//! filterbanks, log-mel spectrograms and MFCCs.

mod mel;
mod stft;
mod wav;

pub use mel::{dct_matrix, hz_to_mel, log_mel, mel_to_hz, mfcc, MelBank, LOG_FLOOR};
pub use stft::{frame_count, stft_power, window_coefficients, FrameSpec, Window};
pub use wav::{read_wav, write_wav};

use thiserror::Error;

use crate::numerics::Tensor;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("audio input error: {0}")]
    Input(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("wav error in {path}: {detail}")]
    Wav { path: String, detail: String },
}

/// Mono audio with samples nominally in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, DspError> {
        if sample_rate == 0 {
            return Err(DspError::Parameter("sample rate must be positive".into()));
        }
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Samples with `start <= t < stop` (seconds), clipped to the clip.
    pub fn slice(&self, start: f64, stop: f64) -> AudioClip {
        let sr = self.sample_rate as f64;
        let to_index = |t: f64| ((t * sr).round().max(0.0) as usize).min(self.samples.len());
        let (a, b) = (to_index(start), to_index(stop));
        AudioClip { samples: self.samples[a..b.max(a)].to_vec(), sample_rate: self.sample_rate }
    }

    /// Keeps only the final `seconds` of audio.
    pub fn tail(&self, seconds: f64) -> AudioClip {
        let keep = (seconds * self.sample_rate as f64).round() as usize;
        let start = self.samples.len().saturating_sub(keep);
        AudioClip { samples: self.samples[start..].to_vec(), sample_rate: self.sample_rate }
    }

    /// Linear-interpolation resampling.
    pub fn resample_linear(&self, target_rate: u32) -> AudioClip {
        if target_rate == self.sample_rate || self.samples.is_empty() {
            return AudioClip { samples: self.samples.clone(), sample_rate: target_rate };
        }
        let ratio = self.sample_rate as f64 / target_rate as f64;
        let n_out = ((self.samples.len() as f64) / ratio).floor().max(1.0) as usize;
        let last = self.samples.len() - 1;
        let samples = (0..n_out)
            .map(|i| {
                let pos = i as f64 * ratio;
                let lo = (pos.floor() as usize).min(last);
                let hi = (lo + 1).min(last);
                let frac = (pos - lo as f64) as f32;
                self.samples[lo] * (1.0 - frac) + self.samples[hi] * frac
            })
            .collect();
        AudioClip { samples, sample_rate: target_rate }
    }
}

/// Which frame-level representation feeds the audio encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AudioFeatureKind {
    LogMel,
    Mfcc,
}

impl AudioFeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            AudioFeatureKind::LogMel => "logmel",
            AudioFeatureKind::Mfcc => "mfcc",
        }
    }
}

impl std::str::FromStr for AudioFeatureKind {
    type Err = DspError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logmel" => Ok(AudioFeatureKind::LogMel),
            "mfcc" => Ok(AudioFeatureKind::Mfcc),
            other => Err(DspError::Parameter(format!("unknown audio features {other:?} (logmel, mfcc)"))),
        }
    }
}

/// Bundles framing, filterbank and coefficient settings.
#[derive(Clone, Debug)]
pub struct AudioFeaturizer {
    pub spec: FrameSpec,
    pub bank: MelBank,
    pub kind: AudioFeatureKind,
    pub n_mfcc: usize,
}

impl AudioFeaturizer {
    pub fn new(spec: FrameSpec, bank: MelBank, kind: AudioFeatureKind, n_mfcc: usize) -> Result<Self, DspError> {
        if kind == AudioFeatureKind::Mfcc && n_mfcc > bank.n_filters() {
            return Err(DspError::Parameter(format!("{n_mfcc} coefficients from {} mel channels", bank.n_filters())));
        }
        Ok(AudioFeaturizer { spec, bank, kind, n_mfcc })
    }

    pub fn width(&self) -> usize {
        match self.kind {
            AudioFeatureKind::LogMel => self.bank.n_filters(),
            AudioFeatureKind::Mfcc => self.n_mfcc,
        }
    }

    pub fn featurize(&self, clip: &AudioClip) -> Result<Tensor<f64>, DspError> {
        let lm = log_mel(clip, &self.spec, &self.bank)?;
        match self.kind {
            AudioFeatureKind::LogMel => Ok(lm),
            AudioFeatureKind::Mfcc => mfcc(&lm, self.n_mfcc),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_second_slice_yields_98_frames() {
        let clip = AudioClip::new(vec![0.1; 48_000], 16_000).unwrap();
        let s = clip.slice(0.5, 1.5);
        assert_eq!(s.samples.len(), 16_000);
        let spec = FrameSpec::default();
        assert_eq!(frame_count(s.samples.len(), &spec, 16_000).unwrap(), 98);
    }

    #[test]
    fn tail_keeps_final_samples() {
        let clip = AudioClip::new((0..100).map(|v| v as f32).collect(), 10).unwrap();
        let t = clip.tail(2.0);
        assert_eq!(t.samples.first(), Some(&80.0));
        assert_eq!(t.samples.len(), 20);
    }

    #[test]
    fn resample_halves_length() {
        let clip = AudioClip::new((0..32).map(|v| v as f32).collect(), 32_000).unwrap();
        let r = clip.resample_linear(16_000);
        assert_eq!(r.samples.len(), 16);
        assert_eq!(r.samples[3], 6.0);
    }
}
