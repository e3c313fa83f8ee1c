//! Corpus statistics, TF-IDF / BM25 sparse vectors and cosine similarity.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::IndexError;
use crate::text::TokenStream;

pub const INDEX_FORMAT: &str = "unirank-index/1";

pub type TermId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightingScheme {
    #[serde(rename = "tfidf")]
    TfIdf,
    Bm25 { k1: f64, b: f64 },
}

impl WeightingScheme {
    pub const DEFAULT_K1: f64 = 1.2;
    pub const DEFAULT_B: f64 = 0.75;

    pub fn bm25() -> Self {
        WeightingScheme::Bm25 { k1: Self::DEFAULT_K1, b: Self::DEFAULT_B }
    }

    pub fn validate(&self) -> Result<(), IndexError> {
        match *self {
            WeightingScheme::TfIdf => Ok(()),
            WeightingScheme::Bm25 { k1, b } => {
                if !(k1.is_finite() && k1 > 0.0) {
                    return Err(IndexError::InvalidScheme(format!("k1 must be positive, got {k1}")));
                }
                if !(0.0..=1.0).contains(&b) {
                    return Err(IndexError::InvalidScheme(format!("b must lie in [0, 1], got {b}")));
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WeightingScheme::TfIdf => "tfidf",
            WeightingScheme::Bm25 { .. } => "bm25",
        }
    }
}

impl fmt::Display for WeightingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightingScheme::TfIdf => f.write_str("TF-IDF"),
            WeightingScheme::Bm25 { .. } => f.write_str("BM25"),
        }
    }
}

/// Parses `tfidf` or `bm25` (default parameters).
impl FromStr for WeightingScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "tfidf" => Ok(WeightingScheme::TfIdf),
            "bm25" => Ok(WeightingScheme::bm25()),
            other => Err(format!("unknown weighting scheme `{other}` (expected tfidf or bm25)")),
        }
    }
}

/// Term ids, document frequencies, document count and average length.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabularyStats {
    term_ids: HashMap<String, TermId>,
    terms: Vec<String>,
    document_frequency: Vec<u32>,
    document_count: usize,
    average_document_length: f64,
}

/// Fits vocabulary statistics. Term ids follow first occurrence order.
pub fn fit(documents: &[TokenStream]) -> Result<VocabularyStats, IndexError> {
    if documents.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    let mut term_ids: HashMap<String, TermId> = HashMap::new();
    let mut terms = Vec::new();
    let mut df: Vec<u32> = Vec::new();
    let mut last_seen: Vec<usize> = Vec::new();
    let mut total_len = 0usize;

    for (doc_idx, doc) in documents.iter().enumerate() {
        total_len += doc.len();
        for token in doc.iter() {
            let id = match term_ids.get(token) {
                Some(&id) => id,
                None => {
                    let id = terms.len() as TermId;
                    term_ids.insert(token.to_string(), id);
                    terms.push(token.to_string());
                    df.push(0);
                    last_seen.push(usize::MAX);
                    id
                }
            } as usize;
            if last_seen[id] != doc_idx {
                last_seen[id] = doc_idx;
                df[id] += 1;
            }
        }
    }

    Ok(VocabularyStats {
        term_ids,
        terms,
        document_frequency: df,
        document_count: documents.len(),
        average_document_length: total_len as f64 / documents.len() as f64,
    })
}

impl VocabularyStats {
    pub fn term_id(&self, term: &str) -> Option<TermId> {
        self.term_ids.get(term).copied()
    }

    pub fn term(&self, id: TermId) -> &str {
        &self.terms[id as usize]
    }

    pub fn document_frequency(&self, term: &str) -> Option<u32> {
        self.term_id(term).map(|id| self.document_frequency[id as usize])
    }

    pub fn document_count(&self) -> usize {
        self.document_count
    }

    pub fn average_document_length(&self) -> f64 {
        self.average_document_length
    }

    pub fn vocabulary_size(&self) -> usize {
        self.terms.len()
    }

    /// `ln((N + 1) / (df + 1)) + 1`
    pub fn tfidf_idf(&self, id: TermId) -> f64 {
        let n = self.document_count as f64;
        let df = self.document_frequency[id as usize] as f64;
        ((n + 1.0) / (df + 1.0)).ln() + 1.0
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`, floored at zero.
    pub fn bm25_idf(&self, id: TermId) -> f64 {
        let n = self.document_count as f64;
        let df = self.document_frequency[id as usize] as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln().max(0.0)
    }

    fn from_parts(terms: Vec<String>, df: Vec<u32>, n: usize, avgdl: f64) -> Result<Self, IndexError> {
        if terms.len() != df.len() {
            return Err(IndexError::Mismatch("term and document-frequency lists differ in length".into()));
        }
        if let Some(bad) = df.iter().find(|&&d| d == 0 || d as usize > n) {
            return Err(IndexError::Mismatch(format!("document frequency {bad} outside [1, {n}]")));
        }
        let mut term_ids = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if term_ids.insert(t.clone(), i as TermId).is_some() {
                return Err(IndexError::Mismatch(format!("term `{t}` listed twice")));
            }
        }
        Ok(Self { term_ids, terms, document_frequency: df, document_count: n, average_document_length: avgdl })
    }
}

/// Non-negative sparse vector with a cached Euclidean norm. Entries are
/// sorted by term id and never hold zero weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(TermId, f64)>,
    norm: f64,
}

impl SparseVector {
    pub fn from_entries(entries: impl IntoIterator<Item = (TermId, f64)>) -> Self {
        let mut merged: Vec<(TermId, f64)> = entries.into_iter().collect();
        merged.sort_unstable_by_key(|&(id, _)| id);
        merged.dedup_by(|next, prev| {
            if next.0 == prev.0 {
                prev.1 += next.1;
                true
            } else {
                false
            }
        });
        merged.retain(|&(_, w)| w != 0.0);
        let norm = Self::norm_of(&merged);
        Self { entries: merged, norm }
    }

    fn norm_of(entries: &[(TermId, f64)]) -> f64 {
        entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn entries(&self) -> &[(TermId, f64)] {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Norm recomputed from the entries, for consistency checks.
    pub fn recompute_norm(&self) -> f64 {
        Self::norm_of(&self.entries)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn weight(&self, id: TermId) -> f64 {
        self.entries.binary_search_by_key(&id, |&(t, _)| t).map(|i| self.entries[i].1).unwrap_or(0.0)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self::from_entries(self.entries.iter().map(|&(id, w)| (id, w * alpha)))
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut sum) = (0, 0, 0.0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }
}

/// Weights a document against fitted statistics. Out-of-vocabulary terms
/// are ignored; `|d|` counts every token of the document.
pub fn vectorize(doc: &TokenStream, stats: &VocabularyStats, scheme: &WeightingScheme) -> SparseVector {
    let mut tf: HashMap<TermId, u32> = HashMap::new();
    for token in doc.iter() {
        if let Some(id) = stats.term_id(token) {
            *tf.entry(id).or_insert(0) += 1;
        }
    }
    let doc_len = doc.len() as f64;
    let entries = tf.into_iter().map(|(id, count)| {
        let tf = count as f64;
        let weight = match *scheme {
            WeightingScheme::TfIdf => tf * stats.tfidf_idf(id),
            WeightingScheme::Bm25 { k1, b } => {
                let avgdl = stats.average_document_length;
                let length_ratio = if avgdl > 0.0 { doc_len / avgdl } else { 1.0 };
                stats.bm25_idf(id) * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * length_ratio))
            }
        };
        (id, weight)
    });
    SparseVector::from_entries(entries)
}

/// Cosine similarity in `[0, 1]`; zero when either vector is empty.
pub fn cosine(x: &SparseVector, y: &SparseVector) -> f64 {
    if x.norm == 0.0 || y.norm == 0.0 {
        return 0.0;
    }
    (x.dot(y) / (x.norm * y.norm)).clamp(0.0, 1.0)
}

/// Vectors plus an inverted index over them, for scoring one query
/// against every stored vector without touching zero-overlap documents.
#[derive(Debug, Clone, Default)]
pub struct SparseIndex {
    vectors: Vec<SparseVector>,
    postings: HashMap<TermId, Vec<(u32, f64)>>,
}

impl SparseIndex {
    pub fn new(vectors: Vec<SparseVector>) -> Self {
        let mut postings: HashMap<TermId, Vec<(u32, f64)>> = HashMap::new();
        for (doc, v) in vectors.iter().enumerate() {
            for &(id, w) in v.entries() {
                postings.entry(id).or_default().push((doc as u32, w));
            }
        }
        Self { vectors, postings }
    }

    pub fn vectors(&self) -> &[SparseVector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Cosine of `query` with every stored vector, in storage order.
    pub fn cosine_all(&self, query: &SparseVector) -> Vec<f64> {
        let mut dots = vec![0.0; self.vectors.len()];
        if query.norm() == 0.0 {
            return dots;
        }
        for &(id, qw) in query.entries() {
            if let Some(list) = self.postings.get(&id) {
                for &(doc, w) in list {
                    dots[doc as usize] += qw * w;
                }
            }
        }
        for (dot, v) in dots.iter_mut().zip(&self.vectors) {
            *dot = if v.norm() == 0.0 { 0.0 } else { (*dot / (query.norm() * v.norm())).clamp(0.0, 1.0) };
        }
        dots
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct VocabularyRecord {
    terms: Vec<String>,
    document_frequency: Vec<u32>,
    document_count: usize,
    average_document_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedFact {
    pub uid: String,
    pub vector: SparseVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexRecord {
    format: String,
    scheme: WeightingScheme,
    fit_scope: String,
    preprocessing: String,
    vocabulary: VocabularyRecord,
    facts: Vec<IndexedFact>,
}

/// Persisted vocabulary statistics and fact vectors for one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexArtifact {
    pub scheme: WeightingScheme,
    /// Free-form description of which documents the statistics were fitted on.
    pub fit_scope: String,
    /// Fingerprint of the preprocessing configuration.
    pub preprocessing: String,
    pub stats: VocabularyStats,
    pub facts: Vec<IndexedFact>,
}

impl IndexArtifact {
    pub fn to_json(&self) -> String {
        let record = IndexRecord {
            format: INDEX_FORMAT.to_string(),
            scheme: self.scheme,
            fit_scope: self.fit_scope.clone(),
            preprocessing: self.preprocessing.clone(),
            vocabulary: VocabularyRecord {
                terms: self.stats.terms.clone(),
                document_frequency: self.stats.document_frequency.clone(),
                document_count: self.stats.document_count,
                average_document_length: self.stats.average_document_length,
            },
            facts: self.facts.clone(),
        };
        let mut out = serde_json::to_string(&record).expect("index serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, IndexError> {
        let record: IndexRecord = serde_json::from_str(text)?;
        if record.format != INDEX_FORMAT {
            return Err(IndexError::FormatTag { found: record.format, expected: INDEX_FORMAT.to_string() });
        }
        record.scheme.validate()?;
        let v = record.vocabulary;
        let stats = VocabularyStats::from_parts(v.terms, v.document_frequency, v.document_count, v.average_document_length)?;
        Ok(Self {
            scheme: record.scheme,
            fit_scope: record.fit_scope,
            preprocessing: record.preprocessing,
            stats,
            facts: record.facts,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), IndexError> {
        fs::write(path, self.to_json()).map_err(|source| IndexError::Io { path: path.to_path_buf(), source })
    }

    pub fn read(path: &Path) -> Result<Self, IndexError> {
        let text = fs::read_to_string(path).map_err(|source| IndexError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }
}
