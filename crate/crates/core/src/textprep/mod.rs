//! Script cleaning: boilerplate removal, tokenization, stopword filtering,
//! lemmatization, vocabulary and bag-of-words construction.

mod lemma;
mod stopwords;

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lemma::{lemmatize, LemmaRules};
pub use stopwords::StopwordList;

pub const DEFAULT_MIN_TOKEN_LENGTH: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TextprepError {
    #[error("term `{term}` of document `{doc}` is not in the vocabulary")]
    UnknownTerm { term: String, doc: String },
    #[error("stopword list line {line}: `{word}` contains whitespace")]
    InvalidStopword { line: usize, word: String },
    #[error("lemma rules line {line}: {message}")]
    InvalidLemmaRule { line: usize, message: String },
    #[error("cannot read `{path}`: {reason}")]
    Io { path: String, reason: String },
    #[error("duplicate vocabulary term `{0}`")]
    DuplicateTerm(String),
}

/// Removes leading boilerplate. While the text (ignoring leading whitespace)
/// starts with one of `markers` (ASCII case-insensitive), everything up to and
/// including the next blank line is dropped; if no blank line follows, only
/// the marker's line is dropped. Text without a leading marker is returned
/// unchanged.
pub fn strip_boilerplate(text: &str, markers: &[String]) -> String {
    let mut rest = text;
    let mut stripped = false;
    loop {
        let trimmed = rest.trim_start();
        let hit = markers.iter().find(|m| {
            !m.is_empty()
                && trimmed
                    .get(..m.len())
                    .is_some_and(|p| p.eq_ignore_ascii_case(m))
        });
        let Some(_) = hit else { break };
        stripped = true;
        rest = match blank_line_end(trimmed) {
            Some(end) => &trimmed[end..],
            None => match trimmed.find('\n') {
                Some(nl) => &trimmed[nl + 1..],
                None => "",
            },
        };
    }
    if stripped {
        rest.to_string()
    } else {
        text.to_string()
    }
}

/// Byte offset just past the first blank line (a newline, optional spaces,
/// then another newline).
fn blank_line_end(s: &str) -> Option<usize> {
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\n' {
            let mut j = i + 1;
            while j < bytes.len() && matches!(bytes[j], b' ' | b'\t' | b'\r') {
                j += 1;
            }
            if j < bytes.len() && bytes[j] == b'\n' {
                return Some(j + 1);
            }
        }
        i += 1;
    }
    None
}

/// Lowercases and splits on every non-letter; drops fragments shorter than 2.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with_min(text, DEFAULT_MIN_TOKEN_LENGTH)
}

pub fn tokenize_with_min(text: &str, min_len: usize) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphabetic() || c.is_uppercase())
        .filter(|t| t.chars().count() >= min_len.max(1))
        .map(str::to_string)
        .collect()
}

pub fn remove_stopwords(tokens: Vec<String>, stoplist: &StopwordList) -> Vec<String> {
    tokens.into_iter().filter(|t| !stoplist.contains(t)).collect()
}

/// Settings for turning a raw script into model tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    pub stopwords: StopwordList,
    pub lemma_rules: LemmaRules,
    pub boilerplate_markers: Vec<String>,
    pub min_token_length: usize,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            stopwords: StopwordList::bundled(),
            lemma_rules: LemmaRules::bundled(),
            boilerplate_markers: vec!["PREVIOUSLY ON ARROW".to_string()],
            min_token_length: DEFAULT_MIN_TOKEN_LENGTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub episode_id: String,
    pub tokens: Vec<String>,
}

/// boilerplate → tokens → stopwords → lemmas → stopwords (a lemma such as
/// "does" → "do" may itself be a stopword).
pub fn clean_text(text: &str, config: &PrepConfig) -> Vec<String> {
    let body = strip_boilerplate(text, &config.boilerplate_markers);
    tokenize_with_min(&body, config.min_token_length)
        .into_iter()
        .filter(|t| !config.stopwords.contains(t))
        .map(|t| lemmatize(&t, &config.lemma_rules))
        .filter(|t| !config.stopwords.contains(t))
        .collect()
}

/// Cleans every `(id, text)` pair; output order follows input order.
pub fn prepare_corpus<'a, I>(docs: I, config: &PrepConfig) -> Vec<TokenizedDoc>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let docs: Vec<(&str, &str)> = docs.into_iter().collect();
    docs.par_iter()
        .map(|(id, text)| TokenizedDoc {
            episode_id: id.to_string(),
            tokens: clean_text(text, config),
        })
        .collect()
}

/// Terms in first-appearance order over the corpus, with ids `0..V`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_terms(terms: Vec<String>) -> Result<Self, TextprepError> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(TextprepError::DuplicateTerm(t.clone()));
            }
        }
        Ok(Self { terms, index })
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: usize) -> &str {
        &self.terms[id]
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = TextprepError;
    fn try_from(terms: Vec<String>) -> Result<Self, Self::Error> {
        Self::from_terms(terms)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.terms
    }
}

pub fn build_vocabulary(docs: &[TokenizedDoc]) -> Vocabulary {
    let mut vocab = Vocabulary::default();
    for doc in docs {
        for t in &doc.tokens {
            if !vocab.index.contains_key(t) {
                vocab.index.insert(t.clone(), vocab.terms.len());
                vocab.terms.push(t.clone());
            }
        }
    }
    vocab
}

/// Sparse document–term counts. Each row holds `(term id, count)` pairs in
/// ascending term id with non-zero counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagOfWords {
    pub doc_ids: Vec<String>,
    pub rows: Vec<Vec<(usize, u32)>>,
    pub vocabulary: Vocabulary,
}

impl BagOfWords {
    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_len(&self, doc: usize) -> u64 {
        self.rows[doc].iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn count(&self, doc: usize, term: usize) -> u32 {
        self.rows[doc]
            .binary_search_by_key(&term, |&(t, _)| t)
            .map(|i| self.rows[doc][i].1)
            .unwrap_or(0)
    }

    /// Sparse triplet export: `doc_id,term,count`.
    pub fn write_triplets_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["doc_id", "term", "count"])?;
        for (doc, row) in self.doc_ids.iter().zip(&self.rows) {
            for &(t, c) in row {
                w.write_record([doc.as_str(), self.vocabulary.term(t), &c.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn to_bag_of_words(
    docs: &[TokenizedDoc],
    vocab: &Vocabulary,
) -> Result<BagOfWords, TextprepError> {
    let mut rows = Vec::with_capacity(docs.len());
    for doc in docs {
        let mut counts: HashMap<usize, u32> = HashMap::new();
        for t in &doc.tokens {
            let id = vocab.id(t).ok_or_else(|| TextprepError::UnknownTerm {
                term: t.clone(),
                doc: doc.episode_id.clone(),
            })?;
            *counts.entry(id).or_default() += 1;
        }
        let mut row: Vec<(usize, u32)> = counts.into_iter().collect();
        row.sort_unstable();
        rows.push(row);
    }
    Ok(BagOfWords {
        doc_ids: docs.iter().map(|d| d.episode_id.clone()).collect(),
        rows,
        vocabulary: vocab.clone(),
    })
}

/// Corpus-wide term totals, descending; ties keep vocabulary order.
pub fn word_frequencies(bow: &BagOfWords, top_n: usize) -> Vec<(String, u64)> {
    let mut totals = vec![0u64; bow.vocabulary.len()];
    for row in &bow.rows {
        for &(t, c) in row {
            totals[t] += c as u64;
        }
    }
    let mut order: Vec<usize> = (0..totals.len()).collect();
    order.sort_by(|&a, &b| totals[b].cmp(&totals[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .take(top_n)
        .map(|t| (bow.vocabulary.term(t).to_string(), totals[t]))
        .collect()
}
