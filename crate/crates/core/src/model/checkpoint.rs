//! Binary checkpoint layout, all integers little-endian:
//!
//! ```text
//! "PHQM" | u32 version | u32 n | n bytes of key = value config
//! u32 count | count tensor records
//! record: u32 name_len | name | u32 rank | rank x u32 dims | f32 data
//! ```
//!
//! Standardization statistics are stored as records named
//! `stats.<modality>.mean` and `stats.<modality>.std`.

use std::path::Path;

use indexmap::IndexMap;

use super::{FrameStats, Model, ModelConfig, ModelError};
use crate::corpus::Modality;
use crate::kv::KeyValues;
use crate::numerics::{ParamSet, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PHQM";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("fits in u32").to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) {
    put_u32(out, name.len());
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len());
    for &d in shape {
        put_u32(out, d);
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(model: &Model<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION as usize);
    let config = model.config.to_kv().serialize();
    put_u32(&mut out, config.len());
    out.extend_from_slice(config.as_bytes());
    put_u32(&mut out, model.params.len() + 2 * model.stats.len());
    for (name, t) in model.params.iter() {
        put_tensor(&mut out, name, t.shape(), t.data());
    }
    for (m, s) in &model.stats {
        put_tensor(&mut out, &format!("stats.{}.mean", m.name()), &[s.mean.len()], &s.mean);
        put_tensor(&mut out, &format!("stats.{}.std", m.name()), &[s.std.len()], &s.std);
    }
    out
}

pub fn save_checkpoint(model: &Model<f32>, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, encode_checkpoint(model))
        .map_err(|e| ModelError::Checkpoint { path: path.display().to_string(), detail: e.to_string() })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], String> {
        if self.bytes.len() - self.pos < n {
            return Err(format!("truncated while reading {what} at byte {}", self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model<f32>, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err("bad magic (not a model checkpoint)".into());
    }
    let version = r.u32("version")? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {version} (this build reads version {CHECKPOINT_VERSION})"));
    }
    let n = r.u32("config length")?;
    let text = std::str::from_utf8(r.take(n, "config")?).map_err(|_| "config block is not UTF-8".to_string())?;
    let config = KeyValues::parse(text).map_err(|e| format!("config block: {e}"))?;
    let config = ModelConfig::from_kv(config).map_err(|e| e.to_string())?;

    let count = r.u32("tensor count")?;
    let mut params = ParamSet::new();
    let mut raw_stats: IndexMap<String, Vec<f32>> = IndexMap::new();
    for i in 0..count {
        let len = r.u32("name length")?;
        let name = std::str::from_utf8(r.take(len, "name")?).map_err(|_| format!("tensor {i}: name is not UTF-8"))?.to_string();
        let rank = r.u32("rank")?;
        let shape = (0..rank).map(|_| r.u32("dims")).collect::<Result<Vec<_>, _>>()?;
        let elements = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or("tensor too large")?;
        let bytes = r.take(elements.checked_mul(4).ok_or("tensor too large")?, &format!("tensor {name}"))?;
        let data: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        if name.starts_with("stats.") {
            raw_stats.insert(name, data);
        } else {
            let t = Tensor::new(shape, data).map_err(|e| format!("tensor {name}: {e}"))?;
            params.insert(name.clone(), t).map_err(|e| e.to_string())?;
        }
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }

    // the stored layout must be exactly what the config describes
    let template: Model<f32> = Model::new(config.clone(), &mut rand::rngs::mock::StepRng::new(0, 0)).map_err(|e| e.to_string())?;
    let expected: Vec<(&str, &[usize])> = template.params.iter().map(|(n, t)| (n, t.shape())).collect();
    let found: Vec<(&str, &[usize])> = params.iter().map(|(n, t)| (n, t.shape())).collect();
    if expected != found {
        return Err("parameter tensors do not match the stored configuration".into());
    }
    let mut stats = IndexMap::new();
    for m in Modality::ALL {
        let mean = raw_stats.shift_remove(&format!("stats.{}.mean", m.name()));
        let std = raw_stats.shift_remove(&format!("stats.{}.std", m.name()));
        match (mean, std) {
            (Some(mean), Some(std)) if mean.len() == config.width(m) && std.len() == mean.len() => {
                stats.insert(m, FrameStats { mean, std });
            }
            (None, None) => {}
            _ => return Err(format!("incomplete standardization statistics for {}", m.name())),
        }
    }
    if let Some(name) = raw_stats.keys().next() {
        return Err(format!("unexpected tensor {name}"));
    }
    Ok(Model { config, params, stats })
}

pub fn load_checkpoint(path: &Path) -> Result<Model<f32>, ModelError> {
    let err = |detail: String| ModelError::Checkpoint { path: path.display().to_string(), detail };
    let bytes = std::fs::read(path).map_err(|e| err(e.to_string()))?;
    decode_checkpoint(&bytes).map_err(err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, SentenceSample};
    use crate::model::tests::config;
    use crate::model::{EncoderKind, Task};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64) -> Model<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cfg = config(EncoderKind::Ccnn, Task::Regression, "a,v,l", 8, 3);
        cfg.standardize = true;
        let mut m = Model::new(cfg, &mut rng).unwrap();
        let samples: Vec<SentenceSample> = (0..3)
            .map(|_| {
                let mut t = |c: usize| Tensor::new(vec![4, c], (0..4 * c).map(|_| rng.gen_range(-3.0f32..3.0)).collect()).unwrap();
                SentenceSample {
                    patient_id: "x".into(),
                    sentence_index: 0,
                    audio: t(80),
                    visual: t(204),
                    text: t(300),
                    label: Some(Label::new(1).unwrap()),
                }
            })
            .collect();
        m.fit_standardization(&samples);
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.phqm");
        let m = model(1);
        save_checkpoint(&m, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_checkpoint(&back), std::fs::read(&path).unwrap());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = encode_checkpoint(&model(2));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).unwrap_err().contains("magic"));
        let mut newer = bytes.clone();
        newer[4..8].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
        let err = decode_checkpoint(&newer).unwrap_err();
        assert!(err.contains("version 2"), "{err}");
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).unwrap_err().contains("truncated"));
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
    }
}
