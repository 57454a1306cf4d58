use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TextprepError;

const ENGLISH: &str = include_str!("../../data/stopwords_en.txt");
const CUSTOM: &str = include_str!("../../data/stopwords_custom.txt");

/// A set of lowercase words removed before modeling.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopwordList {
    words: BTreeSet<String>,
}

impl StopwordList {
    /// The bundled English list.
    pub fn english() -> Self {
        Self::parse(ENGLISH).expect("bundled list is valid")
    }

    /// The bundled corpus-specific additions ("from", "arrow", "oh", ...).
    pub fn custom() -> Self {
        Self::parse(CUSTOM).expect("bundled list is valid")
    }

    /// English plus the custom additions.
    pub fn bundled() -> Self {
        let mut list = Self::english();
        list.extend(Self::custom());
        list
    }

    /// One word per line; `#` starts a comment line. Entries are lowercased.
    pub fn parse(text: &str) -> Result<Self, TextprepError> {
        let mut words = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let w = line.trim();
            if w.is_empty() || w.starts_with('#') {
                continue;
            }
            if w.chars().any(char::is_whitespace) {
                return Err(TextprepError::InvalidStopword {
                    line: i + 1,
                    word: w.to_string(),
                });
            }
            words.insert(w.to_lowercase());
        }
        Ok(Self { words })
    }

    pub fn load(path: &Path) -> Result<Self, TextprepError> {
        let text = std::fs::read_to_string(path).map_err(|e| TextprepError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn extend(&mut self, other: StopwordList) {
        self.words.extend(other.words);
    }

    pub fn insert(&mut self, word: &str) {
        self.words.insert(word.trim().to_lowercase());
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}
