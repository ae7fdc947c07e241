//! 68-point 3-D facial keypoint tracks: CSV ingestion, per-frame
//! normalization and time slicing.

use std::path::Path;

use thiserror::Error;

use crate::numerics::Tensor;

pub const N_POINTS: usize = 68;
/// Width of a normalized frame: x, y, z for each point.
pub const FRAME_WIDTH: usize = 3 * N_POINTS;
pub const NOMINAL_FPS: f64 = 30.0;

#[derive(Debug, Error)]
pub enum VisualError {
    #[error("{path}: row {row}: {detail}")]
    Format { path: String, row: usize, detail: String },
    #[error("degenerate keypoint frame at t = {0} s: all points coincide")]
    Degenerate(f64),
    #[error("no keypoint frames in [{start}, {stop})")]
    EmptySegment { start: f64, stop: f64 },
    #[error("invalid keypoint track: {0}")]
    Invalid(String),
    #[error("i/o error on {path}: {detail}")]
    Io { path: String, detail: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeypointFrame {
    pub timestamp: f64,
    pub points: Vec<[f64; 3]>,
    pub confidence: Option<f64>,
}

impl KeypointFrame {
    pub fn new(timestamp: f64, points: Vec<[f64; 3]>, confidence: Option<f64>) -> Result<Self, VisualError> {
        if points.len() != N_POINTS {
            return Err(VisualError::Invalid(format!("{} points, expected {N_POINTS}", points.len())));
        }
        if !timestamp.is_finite() || points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(VisualError::Invalid(format!("non-finite value in frame at {timestamp}")));
        }
        Ok(KeypointFrame { timestamp, points, confidence })
    }
}

/// Time-ordered keypoint frames.
#[derive(Clone, Debug, PartialEq)]
pub struct KeypointTrack {
    frames: Vec<KeypointFrame>,
    pub nominal_fps: f64,
}

impl KeypointTrack {
    pub fn new(frames: Vec<KeypointFrame>) -> Result<Self, VisualError> {
        if let Some(i) = frames.windows(2).position(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(VisualError::Invalid(format!("timestamps not strictly increasing at frame {}", i + 1)));
        }
        Ok(KeypointTrack { frames, nominal_fps: NOMINAL_FPS })
    }

    pub fn frames(&self) -> &[KeypointFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn has_confidence(&self) -> bool {
        self.frames.iter().any(|f| f.confidence.is_some())
    }

    /// Drops frames whose confidence is below `threshold`; frames without a
    /// confidence value are kept.
    pub fn drop_low_confidence(&self, threshold: f64) -> KeypointTrack {
        KeypointTrack {
            frames: self.frames.iter().filter(|f| f.confidence.is_none_or(|c| c >= threshold)).cloned().collect(),
            nominal_fps: self.nominal_fps,
        }
    }
}

fn header(with_confidence: bool) -> Vec<String> {
    let mut h = vec!["frame".to_string(), "timestamp".to_string()];
    for axis in ["x", "y", "z"] {
        h.extend((0..N_POINTS).map(|i| format!("{axis}{i}")));
    }
    if with_confidence {
        h.push("confidence".into());
    }
    h
}

/// Reads `frame,timestamp,x0..x67,y0..y67,z0..z67[,confidence]`.
pub fn load_keypoints(path: &Path) -> Result<KeypointTrack, VisualError> {
    let p = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| VisualError::Io { path: p.clone(), detail: e.to_string() })?;
    let fail = |row: usize, detail: String| VisualError::Format { path: p.clone(), row, detail };
    let mut records = reader.records();
    let head = records.next().ok_or_else(|| fail(1, "empty file".into()))?.map_err(|e| fail(1, e.to_string()))?;
    let names: Vec<String> = head.iter().map(|s| s.trim().to_string()).collect();
    let with_confidence = names.len() == FRAME_WIDTH + 3;
    if names != header(with_confidence) {
        return Err(fail(1, format!("unexpected header with {} columns", names.len())));
    }
    let width = names.len();
    let mut frames: Vec<KeypointFrame> = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| fail(row, e.to_string()))?;
        if rec.len() != width {
            return Err(fail(row, format!("{} columns, expected {width}", rec.len())));
        }
        let nums = rec
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>().map_err(|_| fail(row, format!("bad number {v:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if nums.iter().any(|v| !v.is_finite()) {
            return Err(fail(row, "non-finite value".into()));
        }
        let timestamp = nums[0];
        let points = (0..N_POINTS).map(|j| [nums[1 + j], nums[1 + N_POINTS + j], nums[1 + 2 * N_POINTS + j]]).collect();
        let confidence = with_confidence.then(|| nums[1 + FRAME_WIDTH]);
        if let Some(prev) = frames.last() {
            if timestamp <= prev.timestamp {
                return Err(fail(row, format!("timestamp {timestamp} does not increase")));
            }
        }
        frames.push(KeypointFrame { timestamp, points, confidence });
    }
    KeypointTrack::new(frames)
}

pub fn save_keypoints(path: &Path, track: &KeypointTrack) -> Result<(), VisualError> {
    let p = path.display().to_string();
    let io = |e: csv::Error| VisualError::Io { path: p.clone(), detail: e.to_string() };
    let with_confidence = track.has_confidence();
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header(with_confidence)).map_err(io)?;
    for (i, f) in track.frames.iter().enumerate() {
        let mut rec = vec![i.to_string(), f.timestamp.to_string()];
        for axis in 0..3 {
            rec.extend(f.points.iter().map(|pt| pt[axis].to_string()));
        }
        if with_confidence {
            rec.push(f.confidence.unwrap_or(1.0).to_string());
        }
        w.write_record(rec).map_err(io)?;
    }
    w.flush().map_err(|e| VisualError::Io { path: p.clone(), detail: e.to_string() })
}

/// Centers the points on their centroid and scales to unit RMS radius;
/// returns `[x0, y0, z0, x1, ...]`.
pub fn normalize_frame(frame: &KeypointFrame) -> Result<Vec<f64>, VisualError> {
    let n = frame.points.len() as f64;
    let mut centroid = [0.0; 3];
    for p in &frame.points {
        for a in 0..3 {
            centroid[a] += p[a];
        }
    }
    centroid.iter_mut().for_each(|c| *c /= n);
    let sq: f64 = frame.points.iter().map(|p| (0..3).map(|a| (p[a] - centroid[a]).powi(2)).sum::<f64>()).sum();
    let rms = (sq / n).sqrt();
    if !(rms > 1e-12 * (1.0 + centroid.iter().map(|c| c.abs()).fold(0.0, f64::max))) {
        return Err(VisualError::Degenerate(frame.timestamp));
    }
    Ok(frame.points.iter().flat_map(|p| (0..3).map(move |a| (p[a] - centroid[a]) / rms)).collect())
}

/// Normalized rows `[frames, 204]` for every frame with `start <= t < stop`.
pub fn slice_track(track: &KeypointTrack, start: f64, stop: f64) -> Result<Tensor<f64>, VisualError> {
    if !(start < stop) {
        return Err(VisualError::Invalid(format!("slice start {start} is not before stop {stop}")));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for f in track.frames.iter().filter(|f| f.timestamp >= start && f.timestamp < stop) {
        data.extend(normalize_frame(f)?);
        rows += 1;
    }
    if rows == 0 {
        return Err(VisualError::EmptySegment { start, stop });
    }
    Tensor::new(vec![rows, FRAME_WIDTH], data).map_err(|e| VisualError::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(t: f64, rng: &mut ChaCha8Rng) -> KeypointFrame {
        let points = (0..N_POINTS).map(|_| [rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(400.0..600.0)]).collect();
        KeypointFrame::new(t, points, None).unwrap()
    }

    fn uniform_track(n: usize) -> KeypointTrack {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        KeypointTrack::new((0..n).map(|i| random_frame(i as f64 / 30.0, &mut rng)).collect()).unwrap()
    }

    fn centroid_and_rms(v: &[f64]) -> ([f64; 3], f64) {
        let mut c = [0.0; 3];
        for p in v.chunks(3) {
            for a in 0..3 {
                c[a] += p[a] / N_POINTS as f64;
            }
        }
        let rms = (v.iter().map(|x| x * x).sum::<f64>() / N_POINTS as f64).sqrt();
        (c, rms)
    }

    #[test]
    fn normalization_is_translation_and_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_frame(0.0, &mut rng);
        let base = normalize_frame(&f).unwrap();
        let moved = KeypointFrame { points: f.points.iter().map(|p| [p[0] + 5.0, p[1] - 3.0, p[2] + 2.0]).collect(), ..f.clone() };
        let scaled = KeypointFrame { points: f.points.iter().map(|p| [p[0] * 2.0, p[1] * 2.0, p[2] * 2.0]).collect(), ..f.clone() };
        for other in [normalize_frame(&moved).unwrap(), normalize_frame(&scaled).unwrap()] {
            for (a, b) in base.iter().zip(&other) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn symmetric_shape_has_unit_radius() {
        // vertices of an icosahedron (cyclic permutations of (0, ±1, ±phi)), repeated
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts = Vec::new();
        for &(a, b) in &[(1.0, phi), (1.0, -phi), (-1.0, phi), (-1.0, -phi)] {
            verts.push([0.0, a, b]);
            verts.push([a, b, 0.0]);
            verts.push([b, 0.0, a]);
        }
        let points: Vec<[f64; 3]> = (0..N_POINTS).map(|i| verts[i % 12]).collect();
        let v = normalize_frame(&KeypointFrame::new(0.0, points, None).unwrap()).unwrap();
        let (_, rms) = centroid_and_rms(&v);
        assert!((rms - 1.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_frame_rejected() {
        let f = KeypointFrame::new(1.5, vec![[3.0, 3.0, 3.0]; N_POINTS], None).unwrap();
        assert!(matches!(normalize_frame(&f), Err(VisualError::Degenerate(t)) if t == 1.5));
    }

    #[test]
    fn slicing_counts() {
        let track = uniform_track(90);
        assert_eq!(slice_track(&track, 0.0, 10.0).unwrap().rows(), 90);
        assert_eq!(slice_track(&track, 1.0, 2.0).unwrap().rows(), 30);
        assert!(matches!(slice_track(&track, 0.034, 0.066), Err(VisualError::EmptySegment { .. })));
        assert!(slice_track(&track, 2.0, 1.0).is_err());
    }

    #[test]
    fn slice_rows_equal_frame_normalizations() {
        let track = uniform_track(40);
        let s = slice_track(&track, 0.5, 1.0).unwrap();
        let first = track.frames().iter().position(|f| f.timestamp >= 0.5).unwrap();
        for r in 0..s.rows() {
            assert_eq!(s.row(r), normalize_frame(&track.frames()[first + r]).unwrap().as_slice());
        }
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.csv");
        let track = uniform_track(2);
        save_keypoints(&path, &track).unwrap();
        assert_eq!(load_keypoints(&path).unwrap(), track);

        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        let short: Vec<&str> = lines[2].split(',').collect();
        lines[2] = short[..short.len() - 1].join(",");
        std::fs::write(&path, lines.join("\n")).unwrap();
        assert!(matches!(load_keypoints(&path), Err(VisualError::Format { row: 3, .. })));

        let mut back = track.frames().to_vec();
        back[1].timestamp = back[0].timestamp;
        let bad = KeypointTrack { frames: back, nominal_fps: 30.0 };
        save_keypoints(&path, &bad).unwrap();
        assert!(matches!(load_keypoints(&path), Err(VisualError::Format { row: 3, .. })));
    }

    #[test]
    fn confidence_column_and_filtering() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let mut frames = uniform_track(3).frames().to_vec();
        for (f, c) in frames.iter_mut().zip([0.9, 0.2, 0.7]) {
            f.confidence = Some(c);
        }
        let track = KeypointTrack::new(frames).unwrap();
        save_keypoints(&path, &track).unwrap();
        let loaded = load_keypoints(&path).unwrap();
        assert_eq!(loaded, track);
        assert_eq!(loaded.drop_low_confidence(0.5).len(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn normalized_frames_are_centered_unit_rms(seed in any::<u64>(), spread in 0.01f64..1e3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let points = (0..N_POINTS).map(|_| [rng.gen_range(-spread..spread), rng.gen_range(-spread..spread), rng.gen_range(-spread..spread) + 500.0]).collect();
            let v = normalize_frame(&KeypointFrame::new(0.0, points, None).unwrap()).unwrap();
            let (c, rms) = centroid_and_rms(&v);
            prop_assert!(c.iter().all(|x| x.abs() < 1e-9));
            prop_assert!((rms - 1.0).abs() < 1e-9);
        }
    }
}
