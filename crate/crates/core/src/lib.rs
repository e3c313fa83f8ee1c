//! Multi-hop explanation reconstruction for science questions.
//!
//! Facts from a knowledge base are ranked for a hypothesis (question plus
//! candidate answer) by combining lexical relevance with a unification
//! score derived from the explanations of similar training hypotheses.
//! The [`eval`] module scores rankings with MAP and produces the ablation
//! breakdowns; [`cli`] wires everything into the `unirank` binary.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod ranker;
pub mod sparse;
pub mod text;

pub use corpus::{
    build_explanation_kb, build_hypothesis, parse_fact_tables, parse_questions, CorpusDocument, Explanation,
    ExplanationKb, ExplanationPair, Fact, FactKb, Hypothesis, InferenceType, Question, Role, Split, TableTypeMap,
};
pub use error::{CorpusError, EvalError, IndexError, RankError, TextError};
pub use ranker::{FitScope, Normalization, RankedFact, RankedList, Ranker, RankerConfig};
pub use sparse::{cosine, fit, vectorize, SparseVector, VocabularyStats, WeightingScheme};
pub use text::{content_overlap_count, normalize, tokenize, Analyzer, LemmaMap, StopwordList, TokenStream};
