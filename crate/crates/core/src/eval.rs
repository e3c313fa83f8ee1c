//! MAP, Precision@K and the breakdowns used in the ablation tables.
//!
//! Every metric here is derived from the 1-based ranks at which a
//! question's gold facts appear. A ranking is reduced to those ranks once
//! ([`QuestionRanks`]) and then discarded, which keeps batch evaluation
//! over the full fact KB cheap.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{DiagnosticKind, Diagnostics, FactKb, Hypothesis, InferenceType, Parsed, Question, Role};
use crate::error::{EvalError, EvalModelError, RankError};
use crate::ranker::{Ranker, RankerConfig};
use crate::sparse::WeightingScheme;
use crate::text::{Analyzer, OverlapBucket};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldFact {
    pub uid: String,
    pub role: Role,
    pub inference_type: InferenceType,
    pub overlap: OverlapBucket,
}

/// Gold explanation of one question, resolved against the fact KB.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldSet {
    pub qid: String,
    /// Hypothesis built from the correct answer.
    pub hypothesis: Hypothesis,
    pub facts: Vec<GoldFact>,
}

impl GoldSet {
    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn uids(&self) -> HashSet<&str> {
        self.facts.iter().map(|f| f.uid.as_str()).collect()
    }
}

/// Builds gold sets for annotated questions. Questions without an
/// explanation, or whose explanation resolves to no known fact, are
/// excluded with a diagnostic; unknown uids are dropped from the gold set.
pub fn gold_sets(questions: &[Question], kb: &FactKb, analyzer: &Analyzer) -> Parsed<Vec<GoldSet>> {
    let mut diagnostics = Diagnostics::default();
    let mut sets = Vec::new();
    for q in questions {
        let Some(explanation) = q.explanation.as_ref().filter(|e| !e.is_empty()) else {
            diagnostics.push(DiagnosticKind::MissingExplanation, q.qid.clone(), "no gold explanation; excluded from MAP");
            continue;
        };
        let Ok(hypothesis) = q.correct_hypothesis() else {
            diagnostics.push(DiagnosticKind::InvalidQuestion, q.qid.clone(), "cannot build the correct hypothesis");
            continue;
        };
        let mut facts = Vec::new();
        for entry in explanation.entries() {
            match kb.get(&entry.uid) {
                Some(fact) => facts.push(GoldFact {
                    uid: entry.uid.clone(),
                    role: entry.role,
                    inference_type: fact.inference_type,
                    overlap: OverlapBucket::from_count(analyzer.content_overlap_count(&hypothesis.text, &fact.text)),
                }),
                None => diagnostics.push(
                    DiagnosticKind::DanglingUid,
                    q.qid.clone(),
                    format!("gold fact {} not in the fact KB; dropped", entry.uid),
                ),
            }
        }
        if facts.is_empty() {
            diagnostics.push(DiagnosticKind::MissingExplanation, q.qid.clone(), "no resolvable gold facts; excluded");
            continue;
        }
        sets.push(GoldSet { qid: q.qid.clone(), hypothesis, facts });
    }
    Parsed { value: sets, diagnostics }
}

/// Average precision from the 1-based ranks of the relevant items.
///
/// `AP = (1/|G|) Σ_g (#relevant at or above rank(g)) / rank(g)`
pub fn average_precision_from_ranks(ranks: &[usize]) -> Option<f64> {
    if ranks.is_empty() {
        return None;
    }
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let sum: f64 = sorted.iter().enumerate().map(|(i, &r)| (i + 1) as f64 / r as f64).sum();
    Some(sum / sorted.len() as f64)
}

/// Ranks of gold items in `ranked`. Gold items absent from the ranking
/// take the worst ranks of a universe of `universe` items (at least the
/// ranking length plus the number of missing items).
pub fn gold_ranks<'r, I>(ranked: I, gold: &HashSet<&str>, universe: Option<usize>) -> HashMap<String, usize>
where
    I: IntoIterator<Item = &'r str>,
{
    let mut found = HashMap::with_capacity(gold.len());
    let mut len = 0;
    for (pos, uid) in ranked.into_iter().enumerate() {
        len = pos + 1;
        if gold.contains(uid) && !found.contains_key(uid) {
            found.insert(uid.to_string(), pos + 1);
        }
    }
    let mut missing: Vec<&str> = gold.iter().copied().filter(|g| !found.contains_key(*g)).collect();
    missing.sort_unstable();
    let universe = universe.unwrap_or(0).max(len + missing.len());
    let first_missing_rank = universe - missing.len() + 1;
    for (i, uid) in missing.into_iter().enumerate() {
        found.insert(uid.to_string(), first_missing_rank + i);
    }
    found
}

/// Average precision of a ranking against a gold set; `None` when the gold
/// set is empty.
pub fn average_precision<'r, I>(ranked: I, gold: &HashSet<&str>) -> Option<f64>
where
    I: IntoIterator<Item = &'r str>,
{
    let ranks: Vec<usize> = gold_ranks(ranked, gold, None).into_values().collect();
    average_precision_from_ranks(&ranks)
}

/// Unweighted mean; `None` for an empty slice.
pub fn mean_average_precision(aps: &[f64]) -> Option<f64> {
    (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
}

/// `|top-K ∩ gold| / K`
pub fn precision_at_k<'r, I>(ranked: I, gold: &HashSet<&str>, k: usize) -> f64
where
    I: IntoIterator<Item = &'r str>,
{
    assert!(k >= 1, "precision@K needs K >= 1");
    let hits = ranked.into_iter().take(k).filter(|uid| gold.contains(uid)).count();
    hits as f64 / k as f64
}

/// The gold facts of one question with their ranks in one model's output.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionRanks {
    pub qid: String,
    pub gold: Vec<(GoldFact, usize)>,
}

impl QuestionRanks {
    pub fn from_ranking<'r, I>(gold: &GoldSet, ranked: I, universe: Option<usize>) -> Self
    where
        I: IntoIterator<Item = &'r str>,
    {
        let ranks = gold_ranks(ranked, &gold.uids(), universe);
        Self { qid: gold.qid.clone(), gold: gold.facts.iter().map(|f| (f.clone(), ranks[&f.uid])).collect() }
    }

    pub fn average_precision(&self) -> f64 {
        let ranks: Vec<usize> = self.gold.iter().map(|(_, r)| *r).collect();
        average_precision_from_ranks(&ranks).unwrap_or(0.0)
    }

    /// AP over the gold facts accepted by `keep`; other gold facts count as
    /// non-relevant but stay in the ranking.
    pub fn restricted_average_precision(&self, keep: impl Fn(&GoldFact) -> bool) -> Option<f64> {
        let ranks: Vec<usize> = self.gold.iter().filter(|(f, _)| keep(f)).map(|(_, r)| *r).collect();
        average_precision_from_ranks(&ranks)
    }

    pub fn precision_at(&self, k: usize) -> f64 {
        self.gold.iter().filter(|(_, r)| *r <= k).count() as f64 / k as f64
    }

    pub fn gold_len(&self) -> usize {
        self.gold.len()
    }
}

/// Per-bucket MAP: restricted AP averaged over the questions that have at
/// least one gold fact in the bucket. Buckets with no facts are omitted.
pub fn category_map<B, F>(questions: &[QuestionRanks], partition: F) -> BTreeMap<B, f64>
where
    B: Ord + Copy,
    F: Fn(&GoldFact) -> Option<B>,
{
    let mut sums: BTreeMap<B, (f64, usize)> = BTreeMap::new();
    for q in questions {
        let buckets: BTreeMap<B, ()> = q.gold.iter().filter_map(|(f, _)| partition(f)).map(|b| (b, ())).collect();
        for bucket in buckets.into_keys() {
            if let Some(ap) = q.restricted_average_precision(|f| partition(f) == Some(bucket)) {
                let slot = sums.entry(bucket).or_insert((0.0, 0));
                slot.0 += ap;
                slot.1 += 1;
            }
        }
    }
    sums.into_iter().map(|(b, (sum, n))| (b, sum / n as f64)).collect()
}

/// Explanation-length buckets as inclusive `[lo, hi]` ranges; `hi = None`
/// is open-ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthBins {
    bins: Vec<(usize, Option<usize>)>,
}

impl LengthBins {
    pub fn new(bins: Vec<(usize, Option<usize>)>) -> Result<Self, EvalError> {
        if bins.is_empty() {
            return Err(EvalError::InvalidSetting("no length bins".into()));
        }
        for w in bins.windows(2) {
            let (_, hi) = w[0];
            let (lo, _) = w[1];
            match hi {
                Some(hi) if hi < lo => {}
                _ => return Err(EvalError::InvalidSetting("length bins must be ascending and disjoint".into())),
            }
        }
        if bins.iter().any(|&(lo, hi)| lo == 0 || hi.is_some_and(|h| h < lo)) {
            return Err(EvalError::InvalidSetting("length bins must be non-empty ranges starting at 1 or more".into()));
        }
        Ok(Self { bins })
    }

    /// `1,2,...,9,10+`
    pub fn standard() -> Self {
        let mut bins: Vec<(usize, Option<usize>)> = (1..=9).map(|n| (n, Some(n))).collect();
        bins.push((10, None));
        Self { bins }
    }

    /// `1-2,3-5,6+`
    pub fn coarse() -> Self {
        Self { bins: vec![(1, Some(2)), (3, Some(5)), (6, None)] }
    }

    /// Parses e.g. `1-2,3-5,6+` or `1,2,3,4+`.
    pub fn parse(spec: &str) -> Result<Self, EvalError> {
        let bad = || EvalError::InvalidSetting(format!("cannot parse length bins `{spec}`"));
        let mut bins = Vec::new();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let bin = if let Some(lo) = part.strip_suffix('+') {
                (lo.trim().parse().map_err(|_| bad())?, None)
            } else if let Some((lo, hi)) = part.split_once('-') {
                (lo.trim().parse().map_err(|_| bad())?, Some(hi.trim().parse().map_err(|_| bad())?))
            } else {
                let n = part.parse().map_err(|_| bad())?;
                (n, Some(n))
            };
            bins.push(bin);
        }
        Self::new(bins)
    }

    pub fn bucket_of(&self, len: usize) -> Option<usize> {
        self.bins.iter().position(|&(lo, hi)| len >= lo && hi.is_none_or(|h| len <= h))
    }

    pub fn label(&self, index: usize) -> String {
        match self.bins[index] {
            (lo, None) => format!("{lo}+"),
            (lo, Some(hi)) if lo == hi => lo.to_string(),
            (lo, Some(hi)) => format!("{lo}-{hi}"),
        }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn describe(&self) -> String {
        (0..self.len()).map(|i| self.label(i)).collect::<Vec<_>>().join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub length: String,
    pub questions: usize,
    pub map: f64,
}

/// MAP of questions grouped by gold explanation size. Empty buckets are
/// omitted.
pub fn map_by_explanation_length(questions: &[QuestionRanks], bins: &LengthBins) -> Vec<LengthRow> {
    let mut sums = vec![(0.0, 0usize); bins.len()];
    for q in questions {
        if let Some(b) = bins.bucket_of(q.gold_len()) {
            sums[b].0 += q.average_precision();
            sums[b].1 += 1;
        }
    }
    sums.into_iter()
        .enumerate()
        .filter(|(_, (_, n))| *n > 0)
        .map(|(i, (sum, n))| LengthRow { length: bins.label(i), questions: n, map: sum / n as f64 })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub length_bins: LengthBins,
    pub precision_ks: Vec<usize>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { length_bins: LengthBins::standard(), precision_ks: (1..=10).chain([20, 50, 100]).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionAp {
    pub qid: String,
    pub gold: usize,
    pub average_precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRow {
    pub k: usize,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub questions: usize,
    pub overall_map: f64,
    pub map_by_role: BTreeMap<String, f64>,
    pub map_by_overlap: BTreeMap<String, f64>,
    pub map_by_inference: BTreeMap<String, f64>,
    pub map_by_explanation_length: Vec<LengthRow>,
    pub precision_at_k: Vec<PrecisionRow>,
    pub per_question: Vec<QuestionAp>,
}

impl EvalReport {
    pub fn from_ranks(model: &str, questions: &[QuestionRanks], settings: &EvalSettings) -> Result<Self, EvalError> {
        if questions.is_empty() {
            return Err(EvalError::NoGold);
        }
        let per_question: Vec<QuestionAp> = questions
            .iter()
            .map(|q| QuestionAp { qid: q.qid.clone(), gold: q.gold_len(), average_precision: q.average_precision() })
            .collect();
        let aps: Vec<f64> = per_question.iter().map(|q| q.average_precision).collect();
        let overall_map = mean_average_precision(&aps).unwrap_or(0.0);

        let map_by_role = category_map(questions, |f| Role::NAMED.contains(&f.role).then_some(f.role))
            .into_iter()
            .map(|(r, m)| (r.label().to_string(), m))
            .collect();
        let map_by_overlap = category_map(questions, |f| Some(f.overlap))
            .into_iter()
            .map(|(b, m)| (b.label().to_string(), m))
            .collect();
        let map_by_inference =
            category_map(questions, |f| (f.inference_type != InferenceType::Unknown).then_some(f.inference_type))
                .into_iter()
                .map(|(t, m)| (t.label().to_string(), m))
                .collect();
        let precision_at_k = settings
            .precision_ks
            .iter()
            .map(|&k| PrecisionRow {
                k,
                precision: questions.iter().map(|q| q.precision_at(k)).sum::<f64>() / questions.len() as f64,
            })
            .collect();

        Ok(Self {
            model: model.to_string(),
            questions: questions.len(),
            overall_map,
            map_by_role,
            map_by_overlap,
            map_by_inference,
            map_by_explanation_length: map_by_explanation_length(questions, &settings.length_bins),
            precision_at_k,
            per_question,
        })
    }
}

/// Ranks every gold question's correct hypothesis in parallel and reduces
/// each ranking to gold ranks. Output follows the order of `gold`.
pub fn rank_gold(ranker: &Ranker<'_>, gold: &[GoldSet], config: &RankerConfig) -> Result<Vec<QuestionRanks>, RankError> {
    config.validate()?;
    gold.par_iter()
        .map(|g| {
            let list = ranker.combined_ranking(&g.hypothesis, config)?;
            Ok(QuestionRanks::from_ranking(g, list.uids(), Some(ranker.kb().len())))
        })
        .collect()
}

pub fn evaluate_model(
    ranker: &Ranker<'_>,
    gold: &[GoldSet],
    config: &RankerConfig,
    settings: &EvalSettings,
) -> Result<EvalReport, EvalModelError> {
    let ranks = rank_gold(ranker, gold, config)?;
    Ok(EvalReport::from_ranks(&config.model_name(), &ranks, settings)?)
}

/// The eight ablation models: RS and US alone under each scheme, then the
/// four joint scheme combinations. Non-scheme settings come from `base`.
pub fn ablation_configs(base: &RankerConfig) -> Vec<RankerConfig> {
    let (tfidf, bm25) = match (base.rs_scheme, base.us_scheme) {
        (b @ WeightingScheme::Bm25 { .. }, _) | (_, b @ WeightingScheme::Bm25 { .. }) => (WeightingScheme::TfIdf, b),
        _ => (WeightingScheme::TfIdf, WeightingScheme::bm25()),
    };
    let mut configs = vec![
        RankerConfig { lambda1: 1.0, rs_scheme: tfidf, us_scheme: tfidf, ..*base },
        RankerConfig { lambda1: 1.0, rs_scheme: bm25, us_scheme: bm25, ..*base },
        RankerConfig { lambda1: 0.0, rs_scheme: tfidf, us_scheme: tfidf, ..*base },
        RankerConfig { lambda1: 0.0, rs_scheme: bm25, us_scheme: bm25, ..*base },
    ];
    let joint_lambda = if base.lambda1 == 0.0 || base.lambda1 == 1.0 { RankerConfig::default().lambda1 } else { base.lambda1 };
    for rs in [tfidf, bm25] {
        for us in [tfidf, bm25] {
            configs.push(RankerConfig { lambda1: joint_lambda, rs_scheme: rs, us_scheme: us, ..*base });
        }
    }
    configs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub map: f64,
}

/// Overall MAP of `base` re-run for each neighbour count.
pub fn knn_sweep(
    ranker: &Ranker<'_>,
    gold: &[GoldSet],
    base: &RankerConfig,
    ks: &[usize],
) -> Result<Vec<SweepRow>, EvalModelError> {
    ks.iter()
        .map(|&k| {
            let config = RankerConfig { k, ..*base };
            let ranks = rank_gold(ranker, gold, &config)?;
            let aps: Vec<f64> = ranks.iter().map(QuestionRanks::average_precision).collect();
            let map = mean_average_precision(&aps).ok_or(EvalError::NoGold)?;
            Ok(SweepRow { k, map })
        })
        .collect()
}

/// Reads a `qid<TAB>fact_uid` file into per-question rankings, keeping the
/// order in which each question's lines appear.
pub fn read_submission(path: &Path) -> Result<BTreeMap<String, Vec<String>>, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })?;
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        match (cols.next(), cols.next(), cols.next()) {
            (Some(qid), Some(uid), None) if !qid.is_empty() && !uid.is_empty() => {
                out.entry(qid.to_string()).or_default().push(uid.to_string());
            }
            _ => return Err(EvalError::MalformedSubmission { path: path.to_path_buf(), line: lineno + 1 }),
        }
    }
    Ok(out)
}

/// Scores a submission against gold sets. Questions absent from the
/// submission get an empty ranking, so all of their gold facts take the
/// worst ranks of the universe.
pub fn score_submission(
    submission: &BTreeMap<String, Vec<String>>,
    gold: &[GoldSet],
    universe: usize,
) -> Vec<QuestionRanks> {
    gold.iter()
        .map(|g| {
            let ranked = submission.get(&g.qid).map(Vec::as_slice).unwrap_or(&[]);
            QuestionRanks::from_ranking(g, ranked.iter().map(String::as_str), Some(universe))
        })
        .collect()
}

/// Gold facts that fall outside the truncated submission, per question.
pub fn truncation_misses(submission: &BTreeMap<String, Vec<String>>, gold: &[GoldSet]) -> usize {
    gold.iter()
        .map(|g| {
            let listed: HashSet<&str> =
                submission.get(&g.qid).map(|v| v.iter().map(String::as_str).collect()).unwrap_or_default();
            g.facts.iter().filter(|f| !listed.contains(f.uid.as_str())).count()
        })
        .sum()
}

/// `length,map,model` rows for several reports.
pub fn map_by_length_csv(reports: &[EvalReport], bins: &LengthBins) -> String {
    let mut out = format!("# length bins: {}\nlength,map,model\n", bins.describe());
    for r in reports {
        for row in &r.map_by_explanation_length {
            let _ = writeln!(out, "{},{:.6},{}", row.length, row.map, r.model);
        }
    }
    out
}

/// `k,precision,model` rows for several reports.
pub fn precision_at_k_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("k,precision,model\n");
    for r in reports {
        for row in &r.precision_at_k {
            let _ = writeln!(out, "{},{:.6},{}", row.k, row.precision, r.model);
        }
    }
    out
}

pub fn knn_sweep_csv(rows: &[SweepRow]) -> String {
    let ks: Vec<String> = rows.iter().map(|r| r.k.to_string()).collect();
    let mut out = format!("# k values: {}\nk,map\n", ks.join(","));
    for r in rows {
        let _ = writeln!(out, "{},{:.6}", r.k, r.map);
    }
    out
}
