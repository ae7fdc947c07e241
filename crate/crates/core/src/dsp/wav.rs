use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioClip, DspError};

fn wav_err(path: &Path, detail: impl ToString) -> DspError {
    DspError::Wav { path: path.display().to_string(), detail: detail.to_string() }
}

/// Reads 16-bit signed mono PCM. Clips at other rates are rejected unless
/// `resample` is set, in which case they are linearly resampled to
/// `expected_rate`.
pub fn read_wav(path: &Path, expected_rate: u32, resample: bool) -> Result<AudioClip, DspError> {
    let reader = WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(wav_err(path, format!("expected mono, found {} channels", spec.channels)));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(wav_err(path, format!("expected 16-bit integer PCM, found {}-bit {:?}", spec.bits_per_sample, spec.sample_format)));
    }
    let samples =
        reader.into_samples::<i16>().map(|s| s.map(|v| v as f32 / 32768.0)).collect::<Result<Vec<_>, _>>().map_err(|e| wav_err(path, e))?;
    let clip = AudioClip::new(samples, spec.sample_rate)?;
    if spec.sample_rate == expected_rate {
        Ok(clip)
    } else if resample {
        Ok(clip.resample_linear(expected_rate))
    } else {
        Err(wav_err(path, format!("sample rate {} Hz, expected {expected_rate} Hz", spec.sample_rate)))
    }
}

/// Writes 16-bit signed mono PCM; samples are clipped to `[-1, 1]`.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<(), DspError> {
    let spec = WavSpec { channels: 1, sample_rate: clip.sample_rate, bits_per_sample: 16, sample_format: SampleFormat::Int };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_rate_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let clip = AudioClip::new(vec![0.0, 0.5, -0.5, 0.25], 8000).unwrap();
        write_wav(&path, &clip).unwrap();
        assert!(matches!(read_wav(&path, 16_000, false), Err(DspError::Wav { .. })));
        let same = read_wav(&path, 8000, false).unwrap();
        assert_eq!(same.samples.len(), 4);
        assert!((same.samples[1] - 0.5).abs() < 1e-4);
        let up = read_wav(&path, 16_000, true).unwrap();
        assert_eq!(up.sample_rate, 16_000);
        assert_eq!(up.samples.len(), 8);
    }

    #[test]
    fn rejects_stereo_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let spec = WavSpec { channels: 2, sample_rate: 16_000, bits_per_sample: 16, sample_format: SampleFormat::Int };
        let mut w = WavWriter::create(&path, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(read_wav(&path, 16_000, false).is_err());
        assert!(read_wav(&dir.path().join("none.wav"), 16_000, false).is_err());
    }
}
