use std::f64::consts::PI;

use super::{stft_power, AudioClip, DspError, FrameSpec};
use crate::numerics::Tensor;

/// Added to mel energies before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

/// HTK mel scale: `2595 * log10(1 + f / 700)`.
pub fn hz_to_mel(hz: f64) -> Result<f64, DspError> {
    if !(hz >= 0.0) {
        return Err(DspError::Parameter(format!("frequency {hz} Hz is negative")));
    }
    Ok(2595.0 * (1.0 + hz / 700.0).log10())
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank over the one-sided spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct MelBank {
    n_filters: usize,
    fft_size: usize,
    low_hz: f64,
    high_hz: f64,
    centers_hz: Vec<f64>,
    /// Row-major `[n_filters, fft_size / 2 + 1]`.
    weights: Vec<f64>,
}

impl MelBank {
    pub fn new(n_filters: usize, fft_size: usize, sample_rate: u32, low_hz: f64, high_hz: f64) -> Result<Self, DspError> {
        let nyquist = sample_rate as f64 / 2.0;
        if n_filters == 0 || !(low_hz < high_hz) || high_hz > nyquist {
            return Err(DspError::Parameter(format!(
                "mel bank needs filters > 0 and 0 <= low < high <= {nyquist}, got {n_filters} over [{low_hz}, {high_hz}]"
            )));
        }
        let (lo, hi) = (hz_to_mel(low_hz)?, hz_to_mel(high_hz)?);
        let edges: Vec<f64> = (0..n_filters + 2).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_filters + 1) as f64)).collect();
        let bins = fft_size / 2 + 1;
        let bin_hz = sample_rate as f64 / fft_size as f64;
        let mut weights = vec![0.0; n_filters * bins];
        for m in 0..n_filters {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..bins {
                let f = k as f64 * bin_hz;
                let up = (f - left) / (center - left);
                let down = (right - f) / (right - center);
                weights[m * bins + k] = up.min(down).max(0.0);
            }
        }
        Ok(MelBank { n_filters, fft_size, low_hz, high_hz, centers_hz: edges[1..=n_filters].to_vec(), weights })
    }

    pub fn n_filters(&self) -> usize {
        self.n_filters
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn band(&self) -> (f64, f64) {
        (self.low_hz, self.high_hz)
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn row(&self, m: usize) -> &[f64] {
        let bins = self.fft_size / 2 + 1;
        &self.weights[m * bins..(m + 1) * bins]
    }

    /// `power [frames, bins] -> energies [frames, n_filters]`.
    pub fn apply(&self, power: &Tensor<f64>) -> Result<Tensor<f64>, DspError> {
        let bins = self.fft_size / 2 + 1;
        if power.rank() != 2 || power.cols() != bins {
            return Err(DspError::Parameter(format!("power spectrum {:?} does not match a {}-point bank", power.shape(), self.fft_size)));
        }
        let mut out = Vec::with_capacity(power.rows() * self.n_filters);
        for f in 0..power.rows() {
            let p = power.row(f);
            for m in 0..self.n_filters {
                out.push(self.row(m).iter().zip(p).map(|(w, x)| w * x).sum());
            }
        }
        Tensor::new(vec![power.rows(), self.n_filters], out).map_err(|e| DspError::Input(e.to_string()))
    }
}

/// `log(mel energies + LOG_FLOOR)` per frame.
pub fn log_mel(clip: &AudioClip, spec: &FrameSpec, bank: &MelBank) -> Result<Tensor<f64>, DspError> {
    if bank.fft_size != spec.fft_size {
        return Err(DspError::Parameter(format!("mel bank built for {}-point fft, frame spec uses {}", bank.fft_size, spec.fft_size)));
    }
    let energies = bank.apply(&stft_power(clip, spec)?)?;
    Ok(energies.map(|e| (e + LOG_FLOOR).ln()))
}

/// Orthonormal DCT-II basis, `[n_coeffs, n]`.
pub fn dct_matrix(n_coeffs: usize, n: usize) -> Vec<f64> {
    let mut m = Vec::with_capacity(n_coeffs * n);
    for k in 0..n_coeffs {
        let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            m.push(scale * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos());
        }
    }
    m
}

/// Leading `n_coeffs` orthonormal DCT-II coefficients of each log-mel frame.
pub fn mfcc(logmel: &Tensor<f64>, n_coeffs: usize) -> Result<Tensor<f64>, DspError> {
    let channels = logmel.cols();
    if n_coeffs == 0 || n_coeffs > channels {
        return Err(DspError::Parameter(format!("{n_coeffs} coefficients requested from {channels} channels")));
    }
    let basis = dct_matrix(n_coeffs, channels);
    let mut out = Vec::with_capacity(logmel.rows() * n_coeffs);
    for f in 0..logmel.rows() {
        let x = logmel.row(f);
        for k in 0..n_coeffs {
            out.push(basis[k * channels..(k + 1) * channels].iter().zip(x).map(|(b, v)| b * v).sum());
        }
    }
    Tensor::new(vec![logmel.rows(), n_coeffs], out).map_err(|e| DspError::Input(e.to_string()))
}
