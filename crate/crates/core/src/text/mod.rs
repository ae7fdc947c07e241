//! Transcript canonicalization, tokenization and word-vector lookup.

mod canon;
mod numbers;
mod vectors;

pub use canon::{canonicalize, CanonicalizationLexicon, SentenceText};
pub use numbers::{spell_number, MAX_SPELLED};
pub use vectors::{embed_tokens, load_embeddings, load_precomputed_sentence_vectors, write_vectors, EmbeddingTable, SentenceVectors};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("cannot canonicalize token {token:?}: {detail}")]
    Canonicalization { token: String, detail: String },
    #[error("{path}:{line}: {detail}")]
    Format { path: String, line: usize, detail: String },
    #[error("text input error: {0}")]
    Input(String),
    #[error("no sentence vector for id {0:?}")]
    Lookup(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}
