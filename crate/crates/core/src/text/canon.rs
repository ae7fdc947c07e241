use std::collections::HashMap;
use std::path::Path;

use super::numbers::{spell_number, MAX_SPELLED};
use super::TextError;

/// Surface form to canonical form substitutions applied per token.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalizationLexicon {
    map: HashMap<String, Vec<String>>,
}

impl Default for CanonicalizationLexicon {
    fn default() -> Self {
        Self::from_pairs([("bout", "about"), ("till", "until"), ("lookin", "looking")]).expect("built-in lexicon is valid")
    }
}

impl CanonicalizationLexicon {
    pub fn empty() -> Self {
        CanonicalizationLexicon { map: HashMap::new() }
    }

    /// Builds a lexicon, rejecting entries that would break idempotence:
    /// non-lowercase keys, duplicate keys, values containing digits or
    /// punctuation, and values that are themselves keys.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, String> {
        let mut map = HashMap::new();
        for (key, value) in pairs {
            let key = key.trim();
            if key.is_empty() || tokenize(key) != [key.to_string()] || key.chars().any(|c| c.is_ascii_digit()) {
                return Err(format!("key {key:?} is not a single lowercase word"));
            }
            let words = tokenize(value);
            if words.is_empty() || words.iter().any(|w| w.chars().any(|c| c.is_ascii_digit())) || words.join(" ") != value.trim() {
                return Err(format!("value {value:?} for {key:?} is not canonical text"));
            }
            if map.insert(key.to_string(), words).is_some() {
                return Err(format!("duplicate key {key:?}"));
            }
        }
        for (key, words) in &map {
            if let Some(w) = words.iter().find(|w| map.contains_key(*w) && *w != key) {
                return Err(format!("value of {key:?} contains key {w:?}"));
            }
            if words.len() == 1 && words[0] == *key {
                continue;
            }
            if words.iter().any(|w| w == key) {
                return Err(format!("value of {key:?} contains the key itself"));
            }
        }
        Ok(CanonicalizationLexicon { map })
    }

    /// Reads `surface<TAB>canonical` lines; `#` starts a comment.
    pub fn load(path: &Path) -> Result<Self, TextError> {
        let text = std::fs::read_to_string(path).map_err(|source| TextError::Io { path: path.display().to_string(), source })?;
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('\t').ok_or_else(|| TextError::Format {
                path: path.display().to_string(),
                line: i + 1,
                detail: "expected surface<TAB>canonical".into(),
            })?;
            pairs.push((i + 1, k.to_string(), v.to_string()));
        }
        Self::from_pairs(pairs.iter().map(|(_, k, v)| (k.as_str(), v.as_str()))).map_err(|detail| {
            let line = pairs.iter().find(|(_, k, _)| detail.contains(&format!("{:?}", k.trim()))).map(|(l, _, _)| *l).unwrap_or(0);
            TextError::Format { path: path.display().to_string(), line, detail }
        })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn lookup(&self, token: &str) -> Option<&[String]> {
        self.map.get(token).map(Vec::as_slice)
    }
}

/// Raw transcript text with its canonical token list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentenceText {
    pub raw: String,
    pub tokens: Vec<String>,
}

impl SentenceText {
    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Lowercases, maps punctuation (other than apostrophes between two word
/// characters) to spaces, and splits letter runs from digit runs.
fn tokenize(raw: &str) -> Vec<String> {
    let lower: Vec<char> = raw.chars().flat_map(char::to_lowercase).collect();
    let is_word = |c: char| c.is_alphabetic() || c.is_ascii_digit();
    let mut cleaned = String::with_capacity(lower.len());
    for (i, &c) in lower.iter().enumerate() {
        let keep = if c == '\'' {
            i > 0 && i + 1 < lower.len() && lower[i - 1].is_alphabetic() && lower[i + 1].is_alphabetic()
        } else {
            is_word(c)
        };
        if keep {
            // digit runs become their own tokens
            if let Some(prev) = cleaned.chars().last() {
                if prev != ' ' && (prev.is_ascii_digit() != c.is_ascii_digit()) {
                    cleaned.push(' ');
                }
            }
            cleaned.push(c);
        } else {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Canonical token list for a transcript line.
pub fn canonicalize(raw: &str, lexicon: &CanonicalizationLexicon) -> Result<SentenceText, TextError> {
    let mut tokens = Vec::new();
    for token in tokenize(raw) {
        if token.starts_with(|c: char| c.is_ascii_digit()) {
            let words = token.parse::<u64>().ok().and_then(spell_number).ok_or_else(|| TextError::Canonicalization {
                token: token.clone(),
                detail: format!("numbers are spelled only in 0..={MAX_SPELLED}"),
            })?;
            tokens.extend(words.split(' ').map(str::to_string));
        } else if let Some(words) = lexicon.lookup(&token) {
            tokens.extend(words.iter().cloned());
        } else {
            tokens.push(token);
        }
    }
    Ok(SentenceText { raw: raw.to_string(), tokens })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn canon(s: &str) -> Vec<String> {
        canonicalize(s, &CanonicalizationLexicon::default()).unwrap().tokens
    }

    #[test]
    fn documented_mappings() {
        assert_eq!(canon("Bout 24 miles"), ["about", "twenty", "four", "miles"]);
        assert_eq!(canon("till"), ["until"]);
        assert_eq!(canon("Lookin' good"), ["looking", "good"]);
        assert_eq!(canon("hello"), ["hello"]);
    }

    #[test]
    fn punctuation_and_apostrophes() {
        assert_eq!(canon("I don't know... 'really'?"), ["i", "don't", "know", "really"]);
        assert_eq!(canon("24th,7"), ["twenty", "four", "th", "seven"]);
        assert_eq!(canon("007"), ["seven"]);
        assert!(canon("?!,.").is_empty());
    }

    #[test]
    fn out_of_range_numbers_name_the_token() {
        let err = canonicalize("about 1000000 things", &CanonicalizationLexicon::default()).unwrap_err();
        match err {
            TextError::Canonicalization { token, .. } => assert_eq!(token, "1000000"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(canonicalize("99999999999999999999999", &CanonicalizationLexicon::default()).is_err());
    }

    #[test]
    fn lexicon_validation() {
        assert!(CanonicalizationLexicon::from_pairs([("Bout", "about")]).is_err());
        assert!(CanonicalizationLexicon::from_pairs([("a", "b"), ("b", "c")]).is_err());
        assert!(CanonicalizationLexicon::from_pairs([("x", "y"), ("x", "z")]).is_err());
        assert!(CanonicalizationLexicon::from_pairs([("gr8", "great")]).is_err());
        assert!(CanonicalizationLexicon::from_pairs([("k", "OK")]).is_err());
        let lex = CanonicalizationLexicon::from_pairs([("gonna", "going to"), ("wanna", "want to")]).unwrap();
        assert_eq!(canonicalize("Gonna go", &lex).unwrap().tokens, ["going", "to", "go"]);
    }

    #[test]
    fn lexicon_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lex.tsv");
        std::fs::write(&path, "# slang\nbout\tabout\n\ncuz\tbecause # trailing\n").unwrap();
        let lex = CanonicalizationLexicon::load(&path).unwrap();
        assert_eq!(lex.len(), 2);
        std::fs::write(&path, "bout about\n").unwrap();
        assert!(matches!(CanonicalizationLexicon::load(&path), Err(TextError::Format { line: 1, .. })));
    }

    proptest! {
        #[test]
        fn idempotent_and_clean(raw in "[ -~]{0,60}") {
            let lex = CanonicalizationLexicon::default();
            let once = canonicalize(&raw, &lex);
            if let Ok(once) = once {
                for t in &once.tokens {
                    prop_assert!(!t.chars().any(|c| c.is_uppercase() || c.is_ascii_digit()));
                }
                let twice = canonicalize(&once.joined(), &lex).unwrap();
                prop_assert_eq!(twice.tokens, once.tokens);
            }
        }
    }
}
