//! Worldtree-style corpus ingestion.
//!
//! Fact tables are tab-separated files with a header row. The header cell
//! containing `[SKIP] UID` names the fact identifier; every other
//! `[SKIP]`-marked column is ignored when the fact sentence is assembled
//! from the remaining cells. Question files carry the inline choices
//! (`(A) ... (B) ...`), the answer key and, for annotated splits, an
//! explanation column of `uid|ROLE` tokens.
//!
//! Malformed rows never abort ingestion; they are skipped and reported in
//! [`Diagnostics`]. Only structural problems (unreadable file, missing UID
//! column, uid collisions across tables) are errors.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CorpusError, UidCollision};

pub const CORPUS_FORMAT: &str = "unirank-corpus/1";

const DEFAULT_TABLE_TYPES: &str = include_str!("../data/table_types.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceType {
    Retrieval,
    InferenceSupporting,
    ComplexInference,
    Unknown,
}

impl InferenceType {
    pub const KNOWN: [InferenceType; 3] =
        [InferenceType::Retrieval, InferenceType::InferenceSupporting, InferenceType::ComplexInference];

    pub fn label(self) -> &'static str {
        match self {
            InferenceType::Retrieval => "retrieval",
            InferenceType::InferenceSupporting => "inference_supporting",
            InferenceType::ComplexInference => "complex_inference",
            InferenceType::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub uid: String,
    pub text: String,
    #[serde(rename = "table")]
    pub table_name: String,
    pub inference_type: InferenceType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Central,
    Grounding,
    LexicalGlue,
    Other,
}

impl Role {
    pub const NAMED: [Role; 3] = [Role::Central, Role::Grounding, Role::LexicalGlue];

    /// Case-insensitive mapping of corpus role names. Anything that is not
    /// one of the three named roles becomes [`Role::Other`].
    pub fn from_corpus(name: &str) -> Self {
        match name.trim().to_ascii_uppercase().as_str() {
            "CENTRAL" => Role::Central,
            "GROUNDING" => Role::Grounding,
            "LEXGLUE" => Role::LexicalGlue,
            _ => Role::Other,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Role::Central => "central",
            Role::Grounding => "grounding",
            Role::LexicalGlue => "lexical_glue",
            Role::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationEntry {
    pub uid: String,
    pub role: Role,
}

/// Gold explanation: distinct fact uids with their explanatory roles, in
/// annotation order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Explanation {
    entries: Vec<ExplanationEntry>,
}

impl Explanation {
    /// Builds an explanation, keeping the first occurrence of each uid.
    /// Returns the explanation and the uids that were dropped as duplicates.
    pub fn from_entries(entries: impl IntoIterator<Item = ExplanationEntry>) -> (Self, Vec<String>) {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        for entry in entries {
            if seen.insert(entry.uid.clone()) {
                kept.push(entry);
            } else {
                dropped.push(entry.uid);
            }
        }
        (Self { entries: kept }, dropped)
    }

    pub fn entries(&self) -> &[ExplanationEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, uid: &str) -> bool {
        self.entries.iter().any(|e| e.uid == uid)
    }

    pub fn role_of(&self, uid: &str) -> Option<Role> {
        self.entries.iter().find(|e| e.uid == uid).map(|e| e.role)
    }

    pub fn uids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.uid.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train, dev or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub qid: String,
    pub stem: String,
    pub choices: Vec<Choice>,
    pub answer_key: String,
    pub split: Split,
    pub explanation: Option<Explanation>,
}

impl Question {
    pub fn choice(&self, label: &str) -> Option<&Choice> {
        self.choices.iter().find(|c| c.label == label)
    }

    pub fn correct_choice(&self) -> Option<&Choice> {
        self.choice(&self.answer_key)
    }

    /// The hypothesis built from the correct answer.
    pub fn correct_hypothesis(&self) -> Result<Hypothesis, CorpusError> {
        build_hypothesis(self, &self.answer_key)
    }

    /// Full question text with inline choice markers, as it appears in the
    /// corpus.
    pub fn display_text(&self) -> String {
        let mut out = self.stem.clone();
        for choice in &self.choices {
            out.push_str(&format!(" ({}) {}", choice.label, choice.text));
        }
        out
    }
}

/// A question stem concatenated with one candidate answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub source_qid: String,
    pub text: String,
    pub is_correct_candidate: bool,
}

/// Separator placed between the stem and the answer text.
pub const HYPOTHESIS_SEPARATOR: &str = " ";

pub fn build_hypothesis(question: &Question, choice_label: &str) -> Result<Hypothesis, CorpusError> {
    if question.stem.trim().is_empty() {
        return Err(CorpusError::InvalidQuestion { qid: question.qid.clone(), reason: "empty stem".into() });
    }
    let choice = question.choice(choice_label).ok_or_else(|| CorpusError::UnknownChoice {
        qid: question.qid.clone(),
        label: choice_label.to_string(),
    })?;
    Ok(Hypothesis {
        source_qid: question.qid.clone(),
        text: format!("{}{}{}", question.stem, HYPOTHESIS_SEPARATOR, choice.text),
        is_correct_candidate: choice_label == question.answer_key,
    })
}

/// Uid-indexed collection of facts, in ingestion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FactKb {
    facts: Vec<Fact>,
    by_uid: HashMap<String, usize>,
}

impl FactKb {
    /// Fails with the list of colliding uids if any uid repeats.
    pub fn from_facts(facts: Vec<Fact>) -> Result<Self, CorpusError> {
        let mut by_uid = HashMap::with_capacity(facts.len());
        let mut tables: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for (idx, fact) in facts.iter().enumerate() {
            tables.entry(fact.uid.as_str()).or_default().push(fact.table_name.clone());
            by_uid.entry(fact.uid.clone()).or_insert(idx);
        }
        let collisions: Vec<UidCollision> = tables
            .into_iter()
            .filter(|(_, t)| t.len() > 1)
            .map(|(uid, tables)| UidCollision { uid: uid.to_string(), tables })
            .collect();
        if !collisions.is_empty() {
            return Err(CorpusError::DuplicateUids { collisions });
        }
        Ok(Self { facts, by_uid })
    }

    pub fn get(&self, uid: &str) -> Option<&Fact> {
        self.by_uid.get(uid).map(|&i| &self.facts[i])
    }

    pub fn index_of(&self, uid: &str) -> Option<usize> {
        self.by_uid.get(uid).copied()
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Fact> {
        self.facts.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplanationPair {
    pub hypothesis: Hypothesis,
    pub explanation: Explanation,
}

/// Bank of (true hypothesis, gold explanation) pairs drawn from train
/// questions only.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExplanationKb {
    pairs: Vec<ExplanationPair>,
}

impl ExplanationKb {
    pub fn pairs(&self) -> &[ExplanationPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ExplanationPair> {
        self.pairs.iter()
    }

    /// Assembles a bank from explicit pairs, bypassing the split check.
    /// Intended for synthetic corpora and tests.
    pub fn from_pairs(pairs: Vec<ExplanationPair>) -> Self {
        Self { pairs }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    MalformedRow,
    EmptyFactText,
    MissingUid,
    DuplicateUidColumn,
    MalformedExplanationToken,
    DuplicateExplanationEntry,
    MissingAnswerKey,
    InvalidQuestion,
    DanglingUid,
    MissingExplanation,
    UnmappedTable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    items: Vec<Diagnostic>,
}

impl Diagnostics {
    pub fn push(&mut self, kind: DiagnosticKind, location: impl Into<String>, message: impl Into<String>) {
        self.items.push(Diagnostic { kind, location: location.into(), message: message.into() });
    }

    pub fn extend(&mut self, other: Diagnostics) {
        self.items.extend(other.items);
    }

    pub fn items(&self) -> &[Diagnostic] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn count(&self, kind: DiagnosticKind) -> usize {
        self.items.iter().filter(|d| d.kind == kind).count()
    }

    /// Counts per kind, for manifests.
    pub fn summary(&self) -> BTreeMap<DiagnosticKind, usize> {
        let mut out = BTreeMap::new();
        for d in &self.items {
            *out.entry(d.kind).or_insert(0) += 1;
        }
        out
    }
}

/// A parsed value together with the non-fatal problems found on the way.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub value: T,
    pub diagnostics: Diagnostics,
}

/// Table name to inference type assignment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TableTypeMap {
    exact: HashMap<String, InferenceType>,
    prefixes: Vec<(String, InferenceType)>,
}

impl TableTypeMap {
    /// The mapping shipped with the crate (`data/table_types.tsv`).
    pub fn standard() -> Self {
        Self::parse(DEFAULT_TABLE_TYPES).expect("bundled table type map is well formed")
    }

    pub fn parse(contents: &str) -> Result<Self, String> {
        let mut map = Self::default();
        for (lineno, raw) in contents.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t').map(str::trim).filter(|c| !c.is_empty());
            let (Some(name), Some(kind)) = (cols.next(), cols.next()) else {
                return Err(format!("line {}: expected `TABLE<TAB>TYPE`", lineno + 1));
            };
            let kind = match kind.to_ascii_uppercase().replace('_', "-").as_str() {
                "RETRIEVAL" => InferenceType::Retrieval,
                "INFERENCE-SUPPORTING" | "INF-SUPP" => InferenceType::InferenceSupporting,
                "COMPLEX-INFERENCE" | "COMPLEX" => InferenceType::ComplexInference,
                other => return Err(format!("line {}: unknown inference type `{other}`", lineno + 1)),
            };
            let name = name.to_ascii_uppercase();
            match name.strip_suffix('*') {
                Some(prefix) => map.prefixes.push((prefix.to_string(), kind)),
                None => {
                    map.exact.insert(name, kind);
                }
            }
        }
        map.prefixes.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Ok(map)
    }

    pub fn from_file(path: &Path) -> Result<Self, CorpusError> {
        let contents = read(path)?;
        Self::parse(&contents).map_err(|reason| CorpusError::InvalidQuestion {
            qid: path.display().to_string(),
            reason,
        })
    }

    /// Exact names win over prefixes; among prefixes the longest wins.
    pub fn lookup(&self, table_name: &str) -> InferenceType {
        let name = table_name.to_ascii_uppercase();
        if let Some(kind) = self.exact.get(&name) {
            return *kind;
        }
        self.prefixes
            .iter()
            .find(|(prefix, _)| name.starts_with(prefix.as_str()))
            .map(|(_, kind)| *kind)
            .unwrap_or(InferenceType::Unknown)
    }
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}

fn split_row(line: &str) -> Vec<&str> {
    line.trim_end_matches(['\r', '\n']).split('\t').collect()
}

/// Parses one fact table. Facts come back in row order.
pub fn parse_fact_table(
    path: &Path,
    table_name: &str,
    inference_type: InferenceType,
    diagnostics: &mut Diagnostics,
) -> Result<Vec<Fact>, CorpusError> {
    let contents = read(path)?;
    let contents = contents.strip_prefix('\u{feff}').unwrap_or(&contents);
    let mut lines = contents.lines();
    let header = lines.next().ok_or_else(|| CorpusError::EmptyFile { path: path.to_path_buf() })?;
    let header = split_row(header);

    let uid_columns: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.to_ascii_uppercase().contains("[SKIP] UID"))
        .map(|(i, _)| i)
        .collect();
    let uid_col = *uid_columns.first().ok_or_else(|| CorpusError::MissingUidColumn { path: path.to_path_buf() })?;
    if uid_columns.len() > 1 {
        diagnostics.push(
            DiagnosticKind::DuplicateUidColumn,
            path.display().to_string(),
            format!("{} `[SKIP] UID` columns; using column {}", uid_columns.len(), uid_col + 1),
        );
    }
    let text_columns: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| !h.trim_start().to_ascii_uppercase().starts_with("[SKIP]"))
        .map(|(i, _)| i)
        .collect();

    let mut facts = Vec::new();
    for (offset, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let location = format!("{}:{}", path.display(), offset + 2);
        let cells = split_row(line);
        let uid = cells.get(uid_col).map(|c| c.trim()).unwrap_or("");
        if uid.is_empty() {
            diagnostics.push(DiagnosticKind::MissingUid, location, "row has no uid; skipped");
            continue;
        }
        let text = text_columns
            .iter()
            .filter_map(|&i| cells.get(i))
            .map(|c| c.trim())
            .filter(|c| !c.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        if text.is_empty() {
            diagnostics.push(
                DiagnosticKind::EmptyFactText,
                location,
                format!("fact {uid} has no text cells; skipped"),
            );
            continue;
        }
        facts.push(Fact { uid: uid.to_string(), text, table_name: table_name.to_string(), inference_type });
    }
    Ok(facts)
}

/// Reads every `*.tsv` file in `dir` (sorted by file name) into a [`FactKb`].
pub fn parse_fact_tables(dir: &Path, types: &TableTypeMap) -> Result<Parsed<FactKb>, CorpusError> {
    let entries = fs::read_dir(dir).map_err(|source| CorpusError::Io { path: dir.to_path_buf(), source })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("tsv")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CorpusError::NoTables { path: dir.to_path_buf() });
    }

    let mut diagnostics = Diagnostics::default();
    let mut facts = Vec::new();
    for path in &paths {
        let table_name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let kind = types.lookup(&table_name);
        if kind == InferenceType::Unknown {
            diagnostics.push(
                DiagnosticKind::UnmappedTable,
                path.display().to_string(),
                format!("table {table_name} has no inference type mapping"),
            );
        }
        facts.extend(parse_fact_table(path, &table_name, kind, &mut diagnostics)?);
    }
    let kb = FactKb::from_facts(facts)?;
    Ok(Parsed { value: kb, diagnostics })
}

/// Splits `stem (A) x (B) y` into the stem and its labelled choices.
///
/// Markers must appear in sequence (`A`, `B`, ... or `1`, `2`, ...) and be
/// preceded by whitespace or the start of the text.
pub fn split_choices(text: &str) -> (String, Vec<Choice>) {
    fn find_marker(text: &str, from: usize, label: char) -> Option<usize> {
        let marker = format!("({label})");
        let mut search = from;
        while let Some(rel) = text[search..].find(&marker) {
            let at = search + rel;
            if at == 0 || text[..at].ends_with(char::is_whitespace) {
                return Some(at);
            }
            search = at + marker.len();
        }
        None
    }

    let first = ['A', '1']
        .into_iter()
        .filter_map(|label| find_marker(text, 0, label).map(|at| (at, label)))
        .min_by_key(|(at, _)| *at);
    let Some((mut at, mut label)) = first else {
        return (text.trim().to_string(), Vec::new());
    };

    let stem = text[..at].trim().to_string();
    let mut choices = Vec::new();
    loop {
        let body_start = at + label.len_utf8() + 2;
        let next_label = char::from_u32(label as u32 + 1).unwrap_or(label);
        let next = find_marker(text, body_start, next_label);
        let body_end = next.unwrap_or(text.len());
        choices.push(Choice { label: label.to_string(), text: text[body_start..body_end].trim().to_string() });
        match next {
            Some(n) => {
                at = n;
                label = next_label;
            }
            None => break,
        }
    }
    (stem, choices)
}

/// Parses a `uid|ROLE uid|ROLE ...` explanation cell.
pub fn parse_explanation(cell: &str, location: &str, diagnostics: &mut Diagnostics) -> Explanation {
    let mut entries = Vec::new();
    for token in cell.split_whitespace() {
        let mut parts = token.split('|');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(uid), Some(role), None) if !uid.is_empty() && !role.is_empty() => {
                entries.push(ExplanationEntry { uid: uid.to_string(), role: Role::from_corpus(role) });
            }
            _ => diagnostics.push(
                DiagnosticKind::MalformedExplanationToken,
                location,
                format!("malformed explanation token `{token}`; skipped"),
            ),
        }
    }
    let (explanation, dropped) = Explanation::from_entries(entries);
    for uid in dropped {
        diagnostics.push(
            DiagnosticKind::DuplicateExplanationEntry,
            location,
            format!("fact {uid} listed more than once; first entry kept"),
        );
    }
    explanation
}

fn find_column(header: &[&str], names: &[&str]) -> Option<usize> {
    header.iter().position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
}

/// Parses a question TSV. Columns are located by header name.
pub fn parse_questions(path: &Path, split: Split) -> Result<Parsed<Vec<Question>>, CorpusError> {
    let contents = read(path)?;
    let contents = contents.strip_prefix('\u{feff}').unwrap_or(&contents);
    let mut lines = contents.lines();
    let header = lines.next().ok_or_else(|| CorpusError::EmptyFile { path: path.to_path_buf() })?;
    let header = split_row(header);

    let missing = |column: &str| CorpusError::MissingColumn { path: path.to_path_buf(), column: column.to_string() };
    let id_col = find_column(&header, &["QuestionID", "qid", "id"]).ok_or_else(|| missing("QuestionID"))?;
    let text_col = find_column(&header, &["question"]).ok_or_else(|| missing("question"))?;
    let key_col = find_column(&header, &["AnswerKey", "answer_key"]).ok_or_else(|| missing("AnswerKey"))?;
    let expl_col = find_column(&header, &["explanation"]);

    let mut diagnostics = Diagnostics::default();
    let mut questions = Vec::new();
    for (offset, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let location = format!("{}:{}", path.display(), offset + 2);
        let cells = split_row(line);
        let cell = |i: usize| cells.get(i).map(|c| c.trim()).unwrap_or("");

        let qid = cell(id_col);
        if qid.is_empty() {
            diagnostics.push(DiagnosticKind::MalformedRow, location, "row has no question id; skipped");
            continue;
        }
        let location = format!("{location} ({qid})");
        let answer_key = cell(key_col);
        if answer_key.is_empty() {
            diagnostics.push(DiagnosticKind::MissingAnswerKey, location, "no answer key; question rejected");
            continue;
        }
        let (stem, choices) = split_choices(cell(text_col));
        if stem.is_empty() {
            diagnostics.push(DiagnosticKind::InvalidQuestion, location, "empty question stem; question rejected");
            continue;
        }
        if !choices.iter().any(|c| c.label == answer_key) {
            diagnostics.push(
                DiagnosticKind::InvalidQuestion,
                location,
                format!("answer key `{answer_key}` matches no choice; question rejected"),
            );
            continue;
        }
        let explanation = expl_col
            .map(|col| parse_explanation(cell(col), &location, &mut diagnostics))
            .filter(|e| !e.is_empty());
        questions.push(Question {
            qid: qid.to_string(),
            stem,
            choices,
            answer_key: answer_key.to_string(),
            split,
            explanation,
        });
    }
    Ok(Parsed { value: questions, diagnostics })
}

/// Reports explanation uids that do not resolve against `kb`.
pub fn dangling_uids(questions: &[Question], kb: &FactKb) -> Diagnostics {
    let mut diagnostics = Diagnostics::default();
    for q in questions {
        let Some(explanation) = &q.explanation else { continue };
        for uid in explanation.uids().filter(|uid| kb.get(uid).is_none()) {
            diagnostics.push(
                DiagnosticKind::DanglingUid,
                q.qid.clone(),
                format!("explanation cites unknown fact {uid}"),
            );
        }
    }
    diagnostics
}

/// Builds the explanation bank from annotated train questions, one pair
/// per question using its correct answer.
///
/// Any non-train question is an error. Train questions without an
/// explanation are skipped; dangling uids are reported when a fact KB is
/// supplied but the pair is kept.
pub fn build_explanation_kb(questions: &[Question], kb: Option<&FactKb>) -> Result<Parsed<ExplanationKb>, CorpusError> {
    if let Some(q) = questions.iter().find(|q| q.split != Split::Train) {
        return Err(CorpusError::NotTrainSplit { qid: q.qid.clone(), split: q.split.to_string() });
    }
    let mut diagnostics = Diagnostics::default();
    let mut pairs = Vec::new();
    for q in questions {
        let Some(explanation) = q.explanation.as_ref().filter(|e| !e.is_empty()) else {
            diagnostics.push(DiagnosticKind::MissingExplanation, q.qid.clone(), "no gold explanation; skipped");
            continue;
        };
        let hypothesis = q.correct_hypothesis()?;
        pairs.push(ExplanationPair { hypothesis, explanation: explanation.clone() });
    }
    if let Some(kb) = kb {
        diagnostics.extend(dangling_uids(questions, kb));
    }
    Ok(Parsed { value: ExplanationKb { pairs }, diagnostics })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct QuestionRecord {
    qid: String,
    stem: String,
    choices: Vec<Choice>,
    answer_key: String,
    explanation: Vec<ExplanationEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CorpusRecord {
    format: String,
    split: Split,
    facts: Vec<Fact>,
    questions: Vec<QuestionRecord>,
}

/// Normalized corpus for one split: the full fact KB plus that split's
/// questions. This is the document every downstream command reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusDocument {
    pub split: Split,
    pub facts: FactKb,
    pub questions: Vec<Question>,
}

impl CorpusDocument {
    pub fn to_json(&self) -> String {
        let record = CorpusRecord {
            format: CORPUS_FORMAT.to_string(),
            split: self.split,
            facts: self.facts.facts().to_vec(),
            questions: self
                .questions
                .iter()
                .map(|q| QuestionRecord {
                    qid: q.qid.clone(),
                    stem: q.stem.clone(),
                    choices: q.choices.clone(),
                    answer_key: q.answer_key.clone(),
                    explanation: q.explanation.as_ref().map(|e| e.entries().to_vec()).unwrap_or_default(),
                })
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&record).expect("corpus records serialize");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let record: CorpusRecord = serde_json::from_str(text)?;
        if record.format != CORPUS_FORMAT {
            return Err(CorpusError::FormatTag { found: record.format, expected: CORPUS_FORMAT.to_string() });
        }
        let facts = FactKb::from_facts(record.facts)?;
        let questions = record
            .questions
            .into_iter()
            .map(|q| {
                let (explanation, _) = Explanation::from_entries(q.explanation);
                Question {
                    qid: q.qid,
                    stem: q.stem,
                    choices: q.choices,
                    answer_key: q.answer_key,
                    split: record.split,
                    explanation: (!explanation.is_empty()).then_some(explanation),
                }
            })
            .collect();
        Ok(Self { split: record.split, facts, questions })
    }

    pub fn read(path: &Path) -> Result<Self, CorpusError> {
        Self::from_json(&read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.to_json()).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
    }
}

/// Parses a tables directory and one question file into a normalized
/// document, collecting every diagnostic including dangling uids.
pub fn ingest(
    tables_dir: &Path,
    questions_path: &Path,
    split: Split,
    types: &TableTypeMap,
) -> Result<Parsed<CorpusDocument>, CorpusError> {
    let Parsed { value: facts, mut diagnostics } = parse_fact_tables(tables_dir, types)?;
    let Parsed { value: questions, diagnostics: qdiag } = parse_questions(questions_path, split)?;
    diagnostics.extend(qdiag);
    diagnostics.extend(dangling_uids(&questions, &facts));
    Ok(Parsed { value: CorpusDocument { split, facts, questions }, diagnostics })
}
