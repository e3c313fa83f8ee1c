//! Tokenization, stopword filtering and optional lemma mapping.
//!
//! Every vectorizer and the overlap counter go through the same
//! [`Analyzer`], so a hypothesis and a fact are always compared in one
//! term space.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::TextError;

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Ordered list of normalized terms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    tokens: Vec<String>,
}

impl TokenStream {
    pub fn new(tokens: Vec<String>) -> Self {
        Self { tokens }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }
}

impl<S: Into<String>> FromIterator<S> for TokenStream {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self { tokens: iter.into_iter().map(Into::into).collect() }
    }
}

/// Lowercases and splits on every non-alphanumeric character.
///
/// Digits and single characters are kept; apostrophes split words, so
/// `objects'` becomes `objects` and `don't` becomes `don`, `t`.
pub fn tokenize(text: &str) -> TokenStream {
    let tokens = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|piece| !piece.is_empty())
        .map(str::to_lowercase)
        .collect();
    TokenStream { tokens }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordList {
    terms: HashSet<String>,
}

impl StopwordList {
    /// The list shipped with the crate (`data/stopwords.txt`).
    pub fn standard() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    pub fn empty() -> Self {
        Self { terms: HashSet::new() }
    }

    /// One term per line; `#` starts a comment.
    pub fn parse(contents: &str) -> Self {
        let terms = contents
            .lines()
            .map(|line| line.split('#').next().unwrap_or("").trim())
            .filter(|line| !line.is_empty())
            .map(str::to_lowercase)
            .collect();
        Self { terms }
    }

    pub fn from_file(path: &Path) -> Result<Self, TextError> {
        let contents = fs::read_to_string(path)
            .map_err(|source| TextError::Io { path: path.to_path_buf(), source })?;
        Ok(Self::parse(&contents))
    }

    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self { terms: terms.into_iter().map(|t| t.as_ref().to_lowercase()).collect() }
    }

    pub fn contains(&self, term: &str) -> bool {
        if self.terms.contains(term) {
            return true;
        }
        term.chars().any(char::is_uppercase) && self.terms.contains(&term.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in sorted order, for manifests and checksums.
    pub fn sorted_terms(&self) -> Vec<&str> {
        let mut terms: Vec<&str> = self.terms.iter().map(String::as_str).collect();
        terms.sort_unstable();
        terms
    }
}

impl Default for StopwordList {
    fn default() -> Self {
        Self::standard()
    }
}

/// Surface form to lemma mapping. Chains are resolved at construction so
/// every lemma is a fixed point of the map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LemmaMap {
    entries: HashMap<String, String>,
}

impl LemmaMap {
    pub fn from_pairs<I, A, B>(pairs: I) -> Result<Self, TextError>
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let raw: HashMap<String, String> = pairs
            .into_iter()
            .map(|(s, l)| (s.as_ref().to_lowercase(), l.as_ref().to_lowercase()))
            .filter(|(s, l)| s != l)
            .collect();

        let mut entries = HashMap::with_capacity(raw.len());
        for surface in raw.keys() {
            let mut seen = BTreeSet::new();
            let mut current = surface.as_str();
            while let Some(next) = raw.get(current) {
                if !seen.insert(current) {
                    return Err(TextError::LemmaCycle { term: surface.clone() });
                }
                current = next;
            }
            entries.insert(surface.clone(), current.to_string());
        }
        Ok(Self { entries })
    }

    /// `surface<TAB>lemma` per line; blank lines and `#` comments ignored.
    pub fn parse(contents: &str) -> Result<Self, TextError> {
        let mut pairs = Vec::new();
        for (lineno, line) in contents.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            match (cols.next(), cols.next()) {
                (Some(surface), Some(lemma))
                    if !surface.trim().is_empty() && !lemma.trim().is_empty() =>
                {
                    pairs.push((surface.trim().to_string(), lemma.trim().to_string()));
                }
                _ => return Err(TextError::MalformedLemmaLine { line: lineno + 1 }),
            }
        }
        Self::from_pairs(pairs)
    }

    pub fn from_file(path: &Path) -> Result<Self, TextError> {
        let contents = fs::read_to_string(path)
            .map_err(|source| TextError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&contents)
    }

    pub fn lemma<'a>(&'a self, term: &'a str) -> &'a str {
        self.entries.get(term).map(String::as_str).unwrap_or(term)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Drops stopwords and applies the lemma map, preserving order.
///
/// A token is dropped when either its surface form or its lemma is a
/// stopword, which keeps the operation idempotent.
pub fn normalize(stream: &TokenStream, stopwords: &StopwordList, lemmas: Option<&LemmaMap>) -> TokenStream {
    let tokens = stream
        .iter()
        .filter(|t| !stopwords.contains(t))
        .map(|t| lemmas.map_or(t, |m| m.lemma(t)))
        .filter(|t| !stopwords.contains(t))
        .map(str::to_string)
        .collect();
    TokenStream { tokens }
}

/// Preprocessing configuration shared by every vectorizer.
#[derive(Debug, Clone, Default)]
pub struct Analyzer {
    stopwords: StopwordList,
    lemmas: Option<LemmaMap>,
}

impl Analyzer {
    pub fn new(stopwords: StopwordList, lemmas: Option<LemmaMap>) -> Self {
        Self { stopwords, lemmas }
    }

    pub fn stopwords(&self) -> &StopwordList {
        &self.stopwords
    }

    pub fn lemmas(&self) -> Option<&LemmaMap> {
        self.lemmas.as_ref()
    }

    /// Hex digest of the stopword list and lemma map; identical
    /// configurations always produce the same string.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for term in self.stopwords.sorted_terms() {
            hasher.update(term.as_bytes());
            hasher.update(b"\n");
        }
        hasher.update(b"--lemmas--\n");
        if let Some(map) = &self.lemmas {
            let mut pairs: Vec<(&String, &String)> = map.entries.iter().collect();
            pairs.sort();
            for (surface, lemma) in pairs {
                hasher.update(surface.as_bytes());
                hasher.update(b"\t");
                hasher.update(lemma.as_bytes());
                hasher.update(b"\n");
            }
        }
        hex::encode(hasher.finalize())
    }

    /// Tokenize then normalize.
    pub fn analyze(&self, text: &str) -> TokenStream {
        normalize(&tokenize(text), &self.stopwords, self.lemmas.as_ref())
    }

    /// Distinct content terms of a text.
    pub fn content_terms(&self, text: &str) -> BTreeSet<String> {
        self.analyze(text).into_tokens().into_iter().collect()
    }

    pub fn content_overlap_count(&self, a: &str, b: &str) -> usize {
        let left = self.content_terms(a);
        let right = self.content_terms(b);
        left.intersection(&right).count()
    }
}

/// Number of distinct content terms shared by both texts under the
/// standard stopword list and no lemmatization.
pub fn content_overlap_count(hypothesis_text: &str, fact_text: &str) -> usize {
    Analyzer::default().content_overlap_count(hypothesis_text, fact_text)
}

/// Lexical-overlap bucket of a gold fact relative to its hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OverlapBucket {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "1")]
    One,
    #[serde(rename = "1+")]
    MoreThanOne,
}

impl OverlapBucket {
    pub const ALL: [OverlapBucket; 3] = [OverlapBucket::MoreThanOne, OverlapBucket::One, OverlapBucket::Zero];

    pub fn from_count(count: usize) -> Self {
        match count {
            0 => OverlapBucket::Zero,
            1 => OverlapBucket::One,
            _ => OverlapBucket::MoreThanOne,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            OverlapBucket::Zero => "0",
            OverlapBucket::One => "1",
            OverlapBucket::MoreThanOne => "1+",
        }
    }
}
