//! Joint relevance and unification ranking.
//!
//! A fact's explanatory score for a hypothesis is a convex combination of
//! its lexical relevance (cosine between hypothesis and fact vectors) and
//! its unification score: the similarity-weighted number of nearest
//! training hypotheses whose gold explanation contains the fact.
//!
//! ```text
//! e(h, f)  = λ · rs(h, f) + (1 − λ) · us(h, f)
//! us(h, f) = Σ_{(h_z, E_z) ∈ kNN(h)} sim(h, h_z) · [f ∈ E_z]
//! ```

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{ExplanationKb, ExplanationPair, FactKb, Hypothesis};
use crate::error::{IndexError, RankError};
use crate::sparse::{fit, vectorize, IndexArtifact, IndexedFact, SparseIndex, SparseVector, VocabularyStats, WeightingScheme};
use crate::text::{Analyzer, TokenStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide each component by its per-query maximum (when positive).
    MaxPerQuery,
    None,
}

impl FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "max" | "maxperquery" => Ok(Normalization::MaxPerQuery),
            "none" => Ok(Normalization::None),
            other => Err(format!("unknown normalization `{other}` (expected max or none)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankerConfig {
    /// Weight of the relevance score.
    pub lambda1: f64,
    /// Number of nearest training hypotheses.
    pub k: usize,
    pub rs_scheme: WeightingScheme,
    pub us_scheme: WeightingScheme,
    pub normalization: Normalization,
}

impl Default for RankerConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.83,
            k: 100,
            rs_scheme: WeightingScheme::bm25(),
            us_scheme: WeightingScheme::bm25(),
            normalization: Normalization::MaxPerQuery,
        }
    }
}

impl RankerConfig {
    pub fn validate(&self) -> Result<(), RankError> {
        if !(0.0..=1.0).contains(&self.lambda1) {
            return Err(RankError::InvalidConfig(format!("lambda1 must lie in [0, 1], got {}", self.lambda1)));
        }
        if self.k == 0 {
            return Err(RankError::InvalidConfig("k must be at least 1".into()));
        }
        self.rs_scheme.validate()?;
        self.us_scheme.validate()?;
        Ok(())
    }

    /// Relevance score only.
    pub fn relevance_only(scheme: WeightingScheme) -> Self {
        Self { lambda1: 1.0, rs_scheme: scheme, us_scheme: scheme, ..Self::default() }
    }

    /// Unification score only.
    pub fn unification_only(scheme: WeightingScheme) -> Self {
        Self { lambda1: 0.0, rs_scheme: scheme, us_scheme: scheme, ..Self::default() }
    }

    pub fn joint(rs: WeightingScheme, us: WeightingScheme) -> Self {
        Self { rs_scheme: rs, us_scheme: us, ..Self::default() }
    }

    /// Short model name, e.g. `RS BM25 + US TF-IDF`.
    pub fn model_name(&self) -> String {
        if self.lambda1 == 1.0 {
            format!("RS {}", self.rs_scheme)
        } else if self.lambda1 == 0.0 {
            format!("US {}", self.us_scheme)
        } else {
            format!("RS {} + US {}", self.rs_scheme, self.us_scheme)
        }
    }

    pub fn uses_relevance(&self) -> bool {
        self.lambda1 > 0.0
    }

    pub fn uses_unification(&self) -> bool {
        self.lambda1 < 1.0
    }
}

/// Which documents the vocabulary statistics are fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitScope {
    Facts,
    FactsAndTrainHypotheses,
}

impl fmt::Display for FitScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitScope::Facts => "facts",
            FitScope::FactsAndTrainHypotheses => "facts+train",
        })
    }
}

impl FromStr for FitScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "facts" => Ok(FitScope::Facts),
            "facts+train" | "facts_and_train" | "all" => Ok(FitScope::FactsAndTrainHypotheses),
            other => Err(format!("unknown fit scope `{other}` (expected facts or facts+train)")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Neighbor<'a> {
    /// Position of the pair in the explanation bank.
    pub pair_index: usize,
    pub pair: &'a ExplanationPair,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFact {
    pub fact_uid: String,
    pub combined_score: f64,
    pub rs_raw: f64,
    pub us_raw: f64,
}

/// Every fact of the KB, ordered by combined score descending and fact uid
/// ascending on ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_qid: String,
    pub records: Vec<RankedFact>,
}

impl RankedList {
    pub fn uids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.fact_uid.as_str())
    }

    /// 1-based rank of a fact, if present.
    pub fn rank_of(&self, uid: &str) -> Option<usize> {
        self.records.iter().position(|r| r.fact_uid == uid).map(|p| p + 1)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

struct SchemeSpace {
    scheme: WeightingScheme,
    facts: SparseIndex,
    hypotheses: SparseIndex,
}

/// Precomputed vectors over an immutable fact KB and explanation bank.
/// Shared read-only across any number of concurrent queries.
pub struct Ranker<'a> {
    kb: &'a FactKb,
    ekb: &'a ExplanationKb,
    analyzer: Analyzer,
    fit_scope: FitScope,
    stats: VocabularyStats,
    fact_tokens: Vec<TokenStream>,
    hypothesis_tokens: Vec<TokenStream>,
    spaces: Vec<SchemeSpace>,
    /// Resolved fact positions for each bank pair; dangling uids dropped.
    explanation_facts: Vec<Vec<usize>>,
    /// Position of each fact in uid-ascending order.
    uid_order: Vec<u32>,
}

impl<'a> Ranker<'a> {
    /// Fits statistics and builds vectors for every scheme in `schemes`.
    pub fn new(
        kb: &'a FactKb,
        ekb: &'a ExplanationKb,
        analyzer: Analyzer,
        fit_scope: FitScope,
        schemes: &[WeightingScheme],
    ) -> Result<Self, RankError> {
        let fact_tokens: Vec<TokenStream> = kb.iter().map(|f| analyzer.analyze(&f.text)).collect();
        let hypothesis_tokens: Vec<TokenStream> =
            ekb.iter().map(|p| analyzer.analyze(&p.hypothesis.text)).collect();
        let stats = match fit_scope {
            FitScope::Facts => fit(&fact_tokens)?,
            FitScope::FactsAndTrainHypotheses => {
                let docs: Vec<TokenStream> = fact_tokens.iter().chain(&hypothesis_tokens).cloned().collect();
                fit(&docs)?
            }
        };
        let mut ranker = Self::assemble(kb, ekb, analyzer, fit_scope, stats, fact_tokens, hypothesis_tokens);
        for scheme in schemes {
            ranker.add_scheme(*scheme)?;
        }
        Ok(ranker)
    }

    /// Builds a ranker for exactly the schemes a configuration needs.
    pub fn for_config(
        kb: &'a FactKb,
        ekb: &'a ExplanationKb,
        analyzer: Analyzer,
        fit_scope: FitScope,
        config: &RankerConfig,
    ) -> Result<Self, RankError> {
        config.validate()?;
        Self::new(kb, ekb, analyzer, fit_scope, &[config.rs_scheme, config.us_scheme])
    }

    /// Reuses persisted statistics and fact vectors.
    pub fn from_index(
        kb: &'a FactKb,
        ekb: &'a ExplanationKb,
        analyzer: Analyzer,
        artifact: IndexArtifact,
        extra_schemes: &[WeightingScheme],
    ) -> Result<Self, RankError> {
        if artifact.preprocessing != analyzer_fingerprint(&analyzer) {
            return Err(IndexError::Mismatch("index was built with a different preprocessing configuration".into()).into());
        }
        if artifact.facts.len() != kb.len() || artifact.facts.iter().zip(kb.iter()).any(|(a, f)| a.uid != f.uid) {
            return Err(IndexError::Mismatch("fact uids differ from the corpus".into()).into());
        }
        let fit_scope: FitScope = artifact.fit_scope.parse().map_err(IndexError::Mismatch)?;
        let fact_tokens: Vec<TokenStream> = kb.iter().map(|f| analyzer.analyze(&f.text)).collect();
        let hypothesis_tokens: Vec<TokenStream> =
            ekb.iter().map(|p| analyzer.analyze(&p.hypothesis.text)).collect();
        let scheme = artifact.scheme;
        let mut ranker =
            Self::assemble(kb, ekb, analyzer, fit_scope, artifact.stats, fact_tokens, hypothesis_tokens);
        let fact_vectors = artifact.facts.into_iter().map(|f| f.vector).collect();
        ranker.insert_space(scheme, fact_vectors)?;
        for s in extra_schemes {
            ranker.add_scheme(*s)?;
        }
        Ok(ranker)
    }

    fn assemble(
        kb: &'a FactKb,
        ekb: &'a ExplanationKb,
        analyzer: Analyzer,
        fit_scope: FitScope,
        stats: VocabularyStats,
        fact_tokens: Vec<TokenStream>,
        hypothesis_tokens: Vec<TokenStream>,
    ) -> Self {
        let explanation_facts = ekb
            .iter()
            .map(|p| p.explanation.uids().filter_map(|uid| kb.index_of(uid)).collect())
            .collect();
        let mut by_uid: Vec<usize> = (0..kb.len()).collect();
        by_uid.sort_by(|&a, &b| kb.facts()[a].uid.cmp(&kb.facts()[b].uid));
        let mut uid_order = vec![0u32; kb.len()];
        for (pos, &idx) in by_uid.iter().enumerate() {
            uid_order[idx] = pos as u32;
        }
        Self {
            kb,
            ekb,
            analyzer,
            fit_scope,
            stats,
            fact_tokens,
            hypothesis_tokens,
            spaces: Vec::new(),
            explanation_facts,
            uid_order,
        }
    }

    /// Adds vectors for another weighting scheme; no-op if already present.
    pub fn add_scheme(&mut self, scheme: WeightingScheme) -> Result<(), RankError> {
        scheme.validate()?;
        if self.spaces.iter().any(|s| s.scheme == scheme) {
            return Ok(());
        }
        let fact_vectors = self.fact_tokens.iter().map(|t| vectorize(t, &self.stats, &scheme)).collect();
        self.insert_space(scheme, fact_vectors)
    }

    fn insert_space(&mut self, scheme: WeightingScheme, fact_vectors: Vec<SparseVector>) -> Result<(), RankError> {
        scheme.validate()?;
        let hyp_vectors = self.hypothesis_tokens.iter().map(|t| vectorize(t, &self.stats, &scheme)).collect();
        self.spaces.retain(|s| s.scheme != scheme);
        self.spaces.push(SchemeSpace {
            scheme,
            facts: SparseIndex::new(fact_vectors),
            hypotheses: SparseIndex::new(hyp_vectors),
        });
        Ok(())
    }

    fn space(&self, scheme: &WeightingScheme) -> Result<&SchemeSpace, RankError> {
        self.spaces
            .iter()
            .find(|s| s.scheme == *scheme)
            .ok_or_else(|| RankError::InvalidConfig(format!("no vectors built for scheme {scheme:?}")))
    }

    pub fn kb(&self) -> &'a FactKb {
        self.kb
    }

    pub fn ekb(&self) -> &'a ExplanationKb {
        self.ekb
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    pub fn stats(&self) -> &VocabularyStats {
        &self.stats
    }

    pub fn fit_scope(&self) -> FitScope {
        self.fit_scope
    }

    pub fn vectorize_text(&self, text: &str, scheme: &WeightingScheme) -> SparseVector {
        vectorize(&self.analyzer.analyze(text), &self.stats, scheme)
    }

    /// Stored fact vector, in KB order.
    pub fn fact_vector(&self, fact_index: usize, scheme: &WeightingScheme) -> Result<&SparseVector, RankError> {
        Ok(&self.space(scheme)?.facts.vectors()[fact_index])
    }

    pub fn hypothesis_vector(&self, pair_index: usize, scheme: &WeightingScheme) -> Result<&SparseVector, RankError> {
        Ok(&self.space(scheme)?.hypotheses.vectors()[pair_index])
    }

    /// Fact positions (in KB order) of a bank pair's resolved explanation.
    pub fn explanation_facts(&self, pair_index: usize) -> &[usize] {
        &self.explanation_facts[pair_index]
    }

    /// Cosine relevance of every fact, in KB order.
    pub fn relevance_scores(&self, h: &Hypothesis, scheme: &WeightingScheme) -> Result<Vec<f64>, RankError> {
        let space = self.space(scheme)?;
        let q = self.vectorize_text(&h.text, scheme);
        Ok(space.facts.cosine_all(&q))
    }

    /// Top-`k` bank pairs by hypothesis similarity, ties by source qid.
    /// Pairs whose hypothesis text equals `h.text` are excluded.
    pub fn knn_hypotheses(&self, h: &Hypothesis, k: usize, scheme: &WeightingScheme) -> Result<Vec<Neighbor<'a>>, RankError> {
        if self.ekb.is_empty() {
            return Err(RankError::EmptyExplanationKb);
        }
        let space = self.space(scheme)?;
        let q = self.vectorize_text(&h.text, scheme);
        let sims = space.hypotheses.cosine_all(&q);
        let pairs = self.ekb.pairs();
        let mut candidates: Vec<usize> =
            (0..pairs.len()).filter(|&i| pairs[i].hypothesis.text != h.text).collect();
        let order = |&a: &usize, &b: &usize| -> Ordering {
            sims[b]
                .total_cmp(&sims[a])
                .then_with(|| pairs[a].hypothesis.source_qid.cmp(&pairs[b].hypothesis.source_qid))
                .then_with(|| a.cmp(&b))
        };
        if candidates.len() > k {
            candidates.select_nth_unstable_by(k - 1, order);
            candidates.truncate(k);
        }
        candidates.sort_by(order);
        Ok(candidates
            .into_iter()
            .map(|i| Neighbor { pair_index: i, pair: &pairs[i], similarity: sims[i] })
            .collect())
    }

    /// Similarity-weighted membership count of each fact across the
    /// neighbours' explanations, in KB order.
    pub fn unification_scores(&self, neighbors: &[Neighbor<'_>]) -> Vec<f64> {
        let mut scores = vec![0.0; self.kb.len()];
        for n in neighbors {
            for &fact in &self.explanation_facts[n.pair_index] {
                scores[fact] += n.similarity;
            }
        }
        scores
    }

    /// Raw relevance and unification components for one hypothesis.
    /// Components a configuration gives zero weight are left at zero.
    pub fn components(&self, h: &Hypothesis, config: &RankerConfig) -> Result<(Vec<f64>, Vec<f64>), RankError> {
        config.validate()?;
        let rs = if config.uses_relevance() {
            self.relevance_scores(h, &config.rs_scheme)?
        } else {
            vec![0.0; self.kb.len()]
        };
        let us = if config.uses_unification() && !self.ekb.is_empty() {
            let neighbors = self.knn_hypotheses(h, config.k, &config.us_scheme)?;
            self.unification_scores(&neighbors)
        } else {
            vec![0.0; self.kb.len()]
        };
        Ok((rs, us))
    }

    /// Combines precomputed components into a ranked list.
    pub fn rank_components(&self, qid: &str, rs: &[f64], us: &[f64], config: &RankerConfig) -> RankedList {
        let scale = |scores: &[f64]| -> f64 {
            match config.normalization {
                Normalization::None => 1.0,
                Normalization::MaxPerQuery => {
                    let max = scores.iter().copied().fold(0.0, f64::max);
                    if max > 0.0 { max } else { 1.0 }
                }
            }
        };
        let (rs_scale, us_scale) = (scale(rs), scale(us));
        let lambda = config.lambda1;
        let combined: Vec<f64> = rs
            .iter()
            .zip(us)
            .map(|(&r, &u)| lambda * (r / rs_scale) + (1.0 - lambda) * (u / us_scale))
            .collect();

        let mut order: Vec<usize> = (0..self.kb.len()).collect();
        order.sort_unstable_by(|&a, &b| {
            combined[b].total_cmp(&combined[a]).then_with(|| self.uid_order[a].cmp(&self.uid_order[b]))
        });
        let facts = self.kb.facts();
        RankedList {
            query_qid: qid.to_string(),
            records: order
                .into_iter()
                .map(|i| RankedFact {
                    fact_uid: facts[i].uid.clone(),
                    combined_score: combined[i],
                    rs_raw: rs[i],
                    us_raw: us[i],
                })
                .collect(),
        }
    }

    pub fn combined_ranking(&self, h: &Hypothesis, config: &RankerConfig) -> Result<RankedList, RankError> {
        let (rs, us) = self.components(h, config)?;
        Ok(self.rank_components(&h.source_qid, &rs, &us, config))
    }

    /// The first `top_k` facts of the combined ranking.
    pub fn explain_topk(&self, h: &Hypothesis, config: &RankerConfig, top_k: usize) -> Result<Vec<String>, RankError> {
        if top_k == 0 {
            return Err(RankError::InvalidConfig("K must be at least 1".into()));
        }
        let list = self.combined_ranking(h, config)?;
        Ok(list.records.into_iter().take(top_k).map(|r| r.fact_uid).collect())
    }

    /// Snapshot of the statistics and fact vectors for one scheme.
    pub fn index_artifact(&self, scheme: &WeightingScheme) -> Result<IndexArtifact, RankError> {
        let space = self.space(scheme)?;
        Ok(IndexArtifact {
            scheme: *scheme,
            fit_scope: self.fit_scope.to_string(),
            preprocessing: analyzer_fingerprint(&self.analyzer),
            stats: self.stats.clone(),
            facts: self
                .kb
                .iter()
                .zip(space.facts.vectors())
                .map(|(f, v)| IndexedFact { uid: f.uid.clone(), vector: v.clone() })
                .collect(),
        })
    }
}

/// Stable fingerprint of a preprocessing configuration.
pub fn analyzer_fingerprint(analyzer: &Analyzer) -> String {
    analyzer.fingerprint()
}
