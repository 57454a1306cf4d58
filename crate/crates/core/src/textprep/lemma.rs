//! Rule-table lemmatizer: an exception table, then ordered suffix rules.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TextprepError;

const BUNDLED: &str = include_str!("../../data/lemma_rules.tsv");

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LemmaRules {
    /// Ordered `(suffix, replacement)` pairs.
    rules: Vec<(String, String)>,
    exceptions: HashMap<String, String>,
}

impl LemmaRules {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED).expect("bundled rules are valid")
    }

    /// Parses the `[rules]` / `[exceptions]` tab-separated format.
    pub fn parse(text: &str) -> Result<Self, TextprepError> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Rules,
            Exceptions,
        }
        let mut section = Section::None;
        let mut out = LemmaRules::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            let bad = |message: &str| TextprepError::InvalidLemmaRule {
                line: i + 1,
                message: message.to_string(),
            };
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            match line.trim() {
                "[rules]" => {
                    section = Section::Rules;
                    continue;
                }
                "[exceptions]" => {
                    section = Section::Exceptions;
                    continue;
                }
                _ => {}
            }
            let Some((left, right)) = line.split_once('\t') else {
                return Err(bad("expected two tab-separated fields"));
            };
            let (left, right) = (left.trim().to_lowercase(), right.trim().to_lowercase());
            if left.is_empty() || !left.chars().all(char::is_alphabetic) {
                return Err(bad("first field must be non-empty letters"));
            }
            if !right.chars().all(char::is_alphabetic) {
                return Err(bad("second field must be letters"));
            }
            match section {
                Section::None => return Err(bad("entry before any section header")),
                Section::Rules => out.rules.push((left, right)),
                Section::Exceptions => {
                    if right.chars().count() < 2 {
                        return Err(bad("lemma must have at least two letters"));
                    }
                    out.exceptions.insert(left, right);
                }
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, TextprepError> {
        let text = std::fs::read_to_string(path).map_err(|e| TextprepError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn rules(&self) -> &[(String, String)] {
        &self.rules
    }

    pub fn exception(&self, token: &str) -> Option<&str> {
        self.exceptions.get(token).map(String::as_str)
    }
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

fn acceptable(stem: &str) -> bool {
    stem.chars().count() >= 3 && stem.chars().any(is_vowel)
}

fn undouble(stem: &mut String) {
    let mut it = stem.chars().rev();
    if let (Some(a), Some(b)) = (it.next(), it.next()) {
        if a == b && !is_vowel(a) && !matches!(a, 'l' | 's' | 'z' | 'f') {
            stem.pop();
        }
    }
}

/// Maps `token` (lowercase) to its lemma.
pub fn lemmatize(token: &str, rules: &LemmaRules) -> String {
    if let Some(l) = rules.exception(token) {
        return l.to_string();
    }
    for (suffix, replacement) in &rules.rules {
        let Some(stem) = token.strip_suffix(suffix.as_str()) else {
            continue;
        };
        if replacement == suffix {
            return token.to_string();
        }
        let mut out = stem.to_string();
        if replacement.is_empty() && suffix.starts_with(is_vowel) {
            undouble(&mut out);
        }
        out.push_str(replacement);
        if acceptable(&out) {
            return out;
        }
    }
    token.to_string()
}
