use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;

use super::{SentenceText, TextError};
use crate::numerics::Tensor;

/// Textual vectors file: a `count dimension` header, then one
/// `key v_1 ... v_dimension` line per entry.
fn parse_vectors(path: &Path) -> Result<(usize, IndexMap<String, Vec<f32>>), TextError> {
    let text = std::fs::read_to_string(path).map_err(|source| TextError::Io { path: path.display().to_string(), source })?;
    let err = |line: usize, detail: String| TextError::Format { path: path.display().to_string(), line, detail };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let parse_usize = |s: &str| s.parse::<usize>().ok();
    let (count, dimension) = match fields.as_slice() {
        [c, d] => match (parse_usize(c), parse_usize(d)) {
            (Some(c), Some(d)) if d > 0 => (c, d),
            _ => return Err(err(1, format!("header {header:?} is not `count dimension`"))),
        },
        _ => return Err(err(1, format!("header {header:?} is not `count dimension`"))),
    };
    let mut entries = IndexMap::with_capacity(count);
    for (i, line) in lines {
        let line_no = i + 1;
        let mut parts = line.split_whitespace();
        let key = parts.next().expect("non-empty line");
        let values =
            parts.map(|v| v.parse::<f32>().map_err(|_| err(line_no, format!("bad number {v:?}")))).collect::<Result<Vec<_>, _>>()?;
        if values.len() != dimension {
            return Err(err(line_no, format!("{key:?} has {} values, expected {dimension}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(err(line_no, format!("{key:?} has a non-finite value")));
        }
        if entries.insert(key.to_string(), values).is_some() {
            return Err(err(line_no, format!("duplicate entry {key:?}")));
        }
    }
    if entries.len() != count {
        return Err(err(1, format!("header declares {count} entries, file has {}", entries.len())));
    }
    Ok((dimension, entries))
}

/// Writes entries in the textual vectors format.
pub fn write_vectors<'a>(
    path: &Path,
    dimension: usize,
    entries: impl ExactSizeIterator<Item = (&'a str, &'a [f32])>,
) -> Result<(), TextError> {
    let mut out = format!("{} {dimension}\n", entries.len());
    for (key, v) in entries {
        out.push_str(key);
        for x in v {
            // `{}` on f32 prints the shortest round-tripping representation
            write!(out, " {x}").expect("writing to a string");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| TextError::Io { path: path.display().to_string(), source })
}

/// Token to vector lookup.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: IndexMap<String, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        EmbeddingTable { dimension, vectors: IndexMap::new() }
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f32>) -> Result<(), TextError> {
        let token = token.into();
        if vector.len() != self.dimension || vector.iter().any(|v| !v.is_finite()) {
            return Err(TextError::Input(format!("vector for {token:?} must have {} finite values", self.dimension)));
        }
        if self.vectors.insert(token.clone(), vector).is_some() {
            return Err(TextError::Input(format!("duplicate token {token:?}")));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn save(&self, path: &Path) -> Result<(), TextError> {
        write_vectors(path, self.dimension, self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice())))
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable, TextError> {
    let (dimension, vectors) = parse_vectors(path)?;
    Ok(EmbeddingTable { dimension, vectors })
}

/// `[tokens, dimension]` matrix; out-of-vocabulary tokens map to zeros.
pub fn embed_tokens(sentence: &SentenceText, table: &EmbeddingTable) -> Result<Tensor<f32>, TextError> {
    if sentence.tokens.is_empty() {
        return Err(TextError::Input(format!("no tokens in {:?}", sentence.raw)));
    }
    let mut data = Vec::with_capacity(sentence.tokens.len() * table.dimension);
    for token in &sentence.tokens {
        match table.get(token) {
            Some(v) => data.extend_from_slice(v),
            None => data.extend(std::iter::repeat_n(0.0, table.dimension)),
        }
    }
    Tensor::new(vec![sentence.tokens.len(), table.dimension], data).map_err(|e| TextError::Input(e.to_string()))
}

/// Fixed sentence embeddings keyed by sentence id.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceVectors {
    dimension: usize,
    vectors: IndexMap<String, Vec<f32>>,
}

impl SentenceVectors {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Result<&[f32], TextError> {
        self.vectors.get(id).map(Vec::as_slice).ok_or_else(|| TextError::Lookup(id.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), TextError> {
        write_vectors(path, self.dimension, self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice())))
    }
}

pub fn load_precomputed_sentence_vectors(path: &Path) -> Result<SentenceVectors, TextError> {
    let (dimension, vectors) = parse_vectors(path)?;
    Ok(SentenceVectors { dimension, vectors })
}
