use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("failed to read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("lemma map line {line}: expected `surface<TAB>lemma`")]
    MalformedLemmaLine { line: usize },
    #[error("lemma map contains a cycle through `{term}`")]
    LemmaCycle { term: String },
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: no `[SKIP] UID` column in header")]
    MissingUidColumn { path: PathBuf },
    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: empty file (no header row)")]
    EmptyFile { path: PathBuf },
    #[error("no table files found in {path}")]
    NoTables { path: PathBuf },
    #[error("duplicate fact uids across tables: {}", format_collisions(.collisions))]
    DuplicateUids { collisions: Vec<UidCollision> },
    #[error("question {qid}: {reason}")]
    InvalidQuestion { qid: String, reason: String },
    #[error("question {qid}: no choice labelled `{label}`")]
    UnknownChoice { qid: String, label: String },
    #[error("question {qid} belongs to the {split} split; only train questions may enter the explanation bank")]
    NotTrainSplit { qid: String, split: String },
    #[error("corpus document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported corpus format tag `{found}` (expected `{expected}`)")]
    FormatTag { found: String, expected: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UidCollision {
    pub uid: String,
    pub tables: Vec<String>,
}

fn format_collisions(collisions: &[UidCollision]) -> String {
    collisions
        .iter()
        .map(|c| format!("{} ({})", c.uid, c.tables.join(", ")))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot fit vocabulary statistics on an empty corpus")]
    EmptyCorpus,
    #[error("invalid weighting scheme: {0}")]
    InvalidScheme(String),
    #[error("failed to access index file {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("index file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported index format tag `{found}` (expected `{expected}`)")]
    FormatTag { found: String, expected: String },
    #[error("index does not match the corpus: {0}")]
    Mismatch(String),
}

#[derive(Debug, Error)]
pub enum RankError {
    #[error("invalid ranker configuration: {0}")]
    InvalidConfig(String),
    #[error("explanation bank is empty")]
    EmptyExplanationKb,
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("failed to read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: expected `qid<TAB>fact_uid`")]
    MalformedSubmission { path: PathBuf, line: usize },
    #[error("no gold explanations available for evaluation")]
    NoGold,
    #[error("invalid evaluation setting: {0}")]
    InvalidSetting(String),
}

#[derive(Debug, Error)]
pub enum EvalModelError {
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
