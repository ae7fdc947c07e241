use std::f64::consts::PI;
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{AudioClip, DspError};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    /// Periodic Hann.
    Hann,
    /// Periodic Hamming.
    Hamming,
    Rectangular,
}

impl FromStr for Window {
    type Err = DspError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hann" => Ok(Window::Hann),
            "hamming" => Ok(Window::Hamming),
            "rectangular" => Ok(Window::Rectangular),
            other => Err(DspError::Parameter(format!("unknown window {other:?} (hann, hamming, rectangular)"))),
        }
    }
}

impl Window {
    pub fn name(self) -> &'static str {
        match self {
            Window::Hann => "hann",
            Window::Hamming => "hamming",
            Window::Rectangular => "rectangular",
        }
    }
}

pub fn window_coefficients(window: Window, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let phase = 2.0 * PI * i as f64 / n as f64;
            match window {
                Window::Hann => 0.5 - 0.5 * phase.cos(),
                Window::Hamming => 0.54 - 0.46 * phase.cos(),
                Window::Rectangular => 1.0,
            }
        })
        .collect()
}

/// Short-time analysis settings. Durations are in seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameSpec {
    pub frame_length: f64,
    pub hop: f64,
    pub window: Window,
    pub fft_size: usize,
}

impl Default for FrameSpec {
    fn default() -> Self {
        FrameSpec { frame_length: 0.025, hop: 0.010, window: Window::Hann, fft_size: 512 }
    }
}

impl FrameSpec {
    pub fn frame_samples(&self, sample_rate: u32) -> usize {
        (self.frame_length * sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop * sample_rate as f64).round() as usize
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn validate(&self, sample_rate: u32) -> Result<(), DspError> {
        let frame = self.frame_samples(sample_rate);
        let hop = self.hop_samples(sample_rate);
        if frame == 0 || hop == 0 || hop > frame {
            return Err(DspError::Parameter(format!(
                "need 0 < hop <= frame length, got hop {} s, frame {} s",
                self.hop, self.frame_length
            )));
        }
        if !self.fft_size.is_power_of_two() || self.fft_size < frame {
            return Err(DspError::Parameter(format!("fft size {} must be a power of two >= {frame} frame samples", self.fft_size)));
        }
        Ok(())
    }
}

/// `1 + floor((n - frame) / hop)`; errors when the clip is shorter than a frame.
pub fn frame_count(n_samples: usize, spec: &FrameSpec, sample_rate: u32) -> Result<usize, DspError> {
    spec.validate(sample_rate)?;
    let frame = spec.frame_samples(sample_rate);
    if n_samples < frame {
        return Err(DspError::Input(format!("{n_samples} samples is shorter than one {frame}-sample frame")));
    }
    Ok(1 + (n_samples - frame) / spec.hop_samples(sample_rate))
}

/// Per-frame windowed power spectrum `|X_k|^2`, `k = 0..=fft_size/2`.
pub fn stft_power(clip: &AudioClip, spec: &FrameSpec) -> Result<Tensor<f64>, DspError> {
    let frames = frame_count(clip.samples.len(), spec, clip.sample_rate)?;
    let frame = spec.frame_samples(clip.sample_rate);
    let hop = spec.hop_samples(clip.sample_rate);
    let window = window_coefficients(spec.window, frame);
    let bins = spec.n_bins();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(spec.fft_size);
    let mut buffer = vec![Complex::new(0.0, 0.0); spec.fft_size];
    let mut out = Vec::with_capacity(frames * bins);
    for f in 0..frames {
        let chunk = &clip.samples[f * hop..f * hop + frame];
        for (slot, (&x, &w)) in buffer.iter_mut().zip(chunk.iter().zip(&window)) {
            *slot = Complex::new(x as f64 * w, 0.0);
        }
        buffer[frame..].iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        fft.process(&mut buffer);
        out.extend(buffer[..bins].iter().map(|c| c.norm_sqr()));
    }
    Tensor::new(vec![frames, bins], out).map_err(|e| DspError::Input(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, seconds: f64, sr: u32) -> AudioClip {
        let n = (seconds * sr as f64) as usize;
        let samples = (0..n).map(|i| (2.0 * PI * freq * i as f64 / sr as f64).sin() as f32 * 0.5).collect();
        AudioClip::new(samples, sr).unwrap()
    }

    /// Direct O(n^2) DFT of one windowed, zero-padded frame.
    fn dft_power(frame: &[f64], n_fft: usize) -> Vec<f64> {
        (0..=n_fft / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, &x) in frame.iter().enumerate() {
                    let a = -2.0 * PI * (k * n) as f64 / n_fft as f64;
                    re += x * a.cos();
                    im += x * a.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    #[test]
    fn sine_peaks_at_expected_bin() {
        let spec = FrameSpec::default();
        let p = stft_power(&sine(1000.0, 0.2, 16_000), &spec).unwrap();
        let expected = (1000.0f64 * 512.0 / 16_000.0).round() as usize;
        for f in 0..p.rows() {
            let row = p.row(f);
            let argmax = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(argmax, expected, "frame {f}");
        }
    }

    #[test]
    fn silence_has_zero_power() {
        let clip = AudioClip::new(vec![0.0; 1600], 16_000).unwrap();
        let p = stft_power(&clip, &FrameSpec::default()).unwrap();
        assert!(p.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_count_formula() {
        let spec = FrameSpec::default();
        for n in [400usize, 401, 559, 560, 16_000, 16_161] {
            let clip = AudioClip::new(vec![0.0; n], 16_000).unwrap();
            let p = stft_power(&clip, &spec).unwrap();
            assert_eq!(p.rows(), 1 + (n - 400) / 160, "n = {n}");
        }
        let short = AudioClip::new(vec![0.0; 399], 16_000).unwrap();
        assert!(matches!(stft_power(&short, &spec), Err(DspError::Input(_))));
    }

    #[test]
    fn matches_direct_dft_and_parseval() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let spec = FrameSpec::default();
        let samples: Vec<f32> = (0..800).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let clip = AudioClip::new(samples, 16_000).unwrap();
        let p = stft_power(&clip, &spec).unwrap();
        let window = window_coefficients(Window::Hann, 400);
        for f in 0..p.rows() {
            let frame: Vec<f64> = (0..400).map(|i| clip.samples[f * 160 + i] as f64 * window[i]).collect();
            let want = dft_power(&frame, 512);
            let scale = want.iter().cloned().fold(0.0, f64::max);
            for (a, b) in p.row(f).iter().zip(&want) {
                assert!((a - b).abs() <= 1e-9 * scale);
            }
            let row = p.row(f);
            let total = row[0] + row[256] + 2.0 * row[1..256].iter().sum::<f64>();
            let energy: f64 = frame.iter().map(|x| x * x).sum::<f64>() * 512.0;
            assert!((total - energy).abs() <= 1e-9 * energy);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let clip = AudioClip::new(vec![0.0; 2000], 16_000).unwrap();
        let small_fft = FrameSpec { fft_size: 256, ..FrameSpec::default() };
        assert!(matches!(stft_power(&clip, &small_fft), Err(DspError::Parameter(_))));
        let long_hop = FrameSpec { hop: 0.05, ..FrameSpec::default() };
        assert!(long_hop.validate(16_000).is_err());
        assert!("blackman".parse::<Window>().is_err());
    }
}
