//! Flat `key = value` text, shared by run configs and checkpoint headers.
//!
//! One pair per line; `#` starts a comment; blank lines are ignored; keys
//! are unique. Serialization writes `key = value` in insertion order.

use indexmap::IndexMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {detail}")]
pub struct KvError {
    pub line: usize,
    pub detail: String,
}

/// Parsed pairs with the line each key came from.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: IndexMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = IndexMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) =
                content.split_once('=').ok_or_else(|| KvError { line, detail: format!("expected key = value, got {content:?}") })?;
            let key = k.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(KvError { line, detail: format!("bad key {key:?}") });
            }
            if entries.insert(key.to_string(), (v.trim().to_string(), line)).is_some() {
                return Err(KvError { line, detail: format!("duplicate key {key:?}") });
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    /// Removes and returns a value with its line number.
    pub fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.shift_remove(key)
    }

    /// Removes and parses a required value.
    pub fn take_parsed<V: std::str::FromStr>(&mut self, key: &str) -> Result<V, KvError>
    where
        V::Err: std::fmt::Display,
    {
        let (raw, line) = self.take(key).ok_or_else(|| KvError { line: 0, detail: format!("missing key {key:?}") })?;
        raw.parse().map_err(|e| KvError { line, detail: format!("{key}: {e}") })
    }

    /// Errors on the first key not consumed by `take`.
    pub fn ensure_empty(&self) -> Result<(), KvError> {
        match self.entries.iter().next() {
            Some((k, (_, line))) => Err(KvError { line: *line, detail: format!("unknown key {k:?}") }),
            None => Ok(()),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, (v, _))| (k.as_str(), v.as_str()))
    }

    /// Pairs with the line each key came from (0 for inserted pairs).
    pub fn iter_lines(&self) -> impl Iterator<Item = (&str, &str, usize)> {
        self.entries.iter().map(|(k, (v, l))| (k.as_str(), v.as_str(), *l))
    }

    pub fn serialize(&self) -> String {
        self.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
