//! The `unirank` command line: ingest, index, rank, eval, sweep and
//! export-qa.
//!
//! Exit codes: 0 success, 1 internal error, 2 usage or input error.

pub mod manifest;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, build_explanation_kb, build_hypothesis, CorpusDocument, Diagnostics, Split, TableTypeMap};
use crate::error::{CorpusError, EvalModelError, RankError};
use crate::eval::{self, EvalReport, EvalSettings, GoldSet, LengthBins, SweepRow};
use crate::ranker::{FitScope, Normalization, RankedList, Ranker, RankerConfig};
use crate::sparse::{IndexArtifact, WeightingScheme};
use crate::text::{Analyzer, LemmaMap, StopwordList};

use manifest::RunManifest;

/// Environment variable naming a directory against which relative input
/// paths are resolved when they do not exist in the working directory.
pub const CORPUS_ROOT_ENV: &str = "UNIRANK_CORPUS";

/// Default number of ranked facts written per question.
pub const DEFAULT_TOP: usize = 500;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Internal(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Internal(err) => write!(f, "{err:#}"),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(err: CorpusError) -> Self {
        CliError::Usage(err.to_string())
    }
}

impl From<RankError> for CliError {
    fn from(err: RankError) -> Self {
        match err {
            RankError::InvalidConfig(_) | RankError::EmptyExplanationKb => CliError::Usage(err.to_string()),
            other => CliError::Internal(other.into()),
        }
    }
}

impl From<EvalModelError> for CliError {
    fn from(err: EvalModelError) -> Self {
        match err {
            EvalModelError::Rank(e) => e.into(),
            EvalModelError::Eval(e) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Internal(err.into())
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "unirank", version)]
#[command(about = "Explanation reconstruction by joint relevance and unification ranking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse fact tables and a question file into a normalized corpus document
    Ingest(IngestArgs),
    /// Fit vocabulary statistics and persist fact vectors for one scheme
    Index(IndexArgs),
    /// Rank the fact KB for every question's correct hypothesis
    Rank(RankArgs),
    /// Rank and score against gold explanations (or score a submission file)
    Eval(EvalArgs),
    /// MAP as a function of the number of nearest hypotheses
    Sweep(SweepArgs),
    /// Export question, candidate and top-K explanation records for every choice
    ExportQa(ExportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory of fact table TSV files
    #[arg(long)]
    pub tables: PathBuf,
    /// Question TSV file
    #[arg(long)]
    pub questions: PathBuf,
    #[arg(long, value_parser = parse_split)]
    pub split: Split,
    /// Output JSON document
    #[arg(long)]
    pub out: PathBuf,
    /// Table name to inference type mapping (defaults to the bundled one)
    #[arg(long)]
    pub table_types: Option<PathBuf>,
    /// Manifest path (defaults to `<out>.manifest.json`)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse()
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Normalized train-split document (source of the explanation bank)
    #[arg(long)]
    pub train: PathBuf,
    /// Normalized document of the questions to rank; defaults to --train
    #[arg(long)]
    pub questions: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// Relevance and unification combined
    Joint,
    /// Relevance score only (lambda1 = 1)
    Rs,
    /// Unification score only (lambda1 = 0)
    Us,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RankerArgs {
    /// JSON configuration file; explicit flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<Model>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    /// tfidf or bm25
    #[arg(long)]
    pub rs_scheme: Option<String>,
    /// tfidf or bm25
    #[arg(long)]
    pub us_scheme: Option<String>,
    /// BM25 term-frequency saturation
    #[arg(long)]
    pub k1: Option<f64>,
    /// BM25 length normalization
    #[arg(long)]
    pub b: Option<f64>,
    /// max or none
    #[arg(long)]
    pub normalization: Option<String>,
    /// Stopword file (one term per line, `#` comments)
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Disable stopword removal
    #[arg(long)]
    pub no_stopwords: bool,
    /// Lemma map file (`surface<TAB>lemma`)
    #[arg(long)]
    pub lemmas: Option<PathBuf>,
    /// facts or facts+train
    #[arg(long)]
    pub fit_scope: Option<String>,
    /// Worker threads (defaults to the number of cores)
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub ranker: RankerArgs,
    /// tfidf or bm25
    #[arg(long, default_value = "bm25")]
    pub scheme: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub ranker: RankerArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Prebuilt index for the relevance scheme
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Comma-separated question ids to rank
    #[arg(long, value_delimiter = ',')]
    pub qids: Option<Vec<String>>,
    /// Facts written per question
    #[arg(long)]
    pub top: Option<usize>,
    /// Write the complete ranking of every fact
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub ranker: RankerArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Score this `qid<TAB>fact_uid` file instead of ranking
    #[arg(long)]
    pub submission: Option<PathBuf>,
    /// Also evaluate every RS / US / joint scheme combination
    #[arg(long)]
    pub ablate: bool,
    /// Comma-separated k values for a neighbour-count sweep
    #[arg(long, value_delimiter = ',')]
    pub sweep_k: Option<Vec<usize>>,
    /// Explanation length buckets, e.g. `1-2,3-5,6+`
    #[arg(long)]
    pub length_bins: Option<String>,
    /// Comma-separated K values for precision@K
    #[arg(long, value_delimiter = ',')]
    pub precision_k: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub ranker: RankerArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Comma-separated k values
    #[arg(long = "k-values", value_delimiter = ',', default_value = "1,2,5,10,20,50,100")]
    pub k_values: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub ranker: RankerArgs,
    /// Explanation sentences per record
    #[arg(long, default_value_t = 3)]
    pub top_k: usize,
    /// Output JSON-lines file
    #[arg(long)]
    pub out: PathBuf,
}

/// Optional settings read from `--config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: Option<Model>,
    pub lambda1: Option<f64>,
    pub k: Option<usize>,
    pub rs_scheme: Option<String>,
    pub us_scheme: Option<String>,
    pub k1: Option<f64>,
    pub b: Option<f64>,
    pub normalization: Option<String>,
    pub stopwords: Option<PathBuf>,
    pub no_stopwords: Option<bool>,
    pub lemmas: Option<PathBuf>,
    pub fit_scope: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreprocessingConfig {
    /// `standard`, `none` or the stopword file path.
    pub stopwords: String,
    pub stopword_count: usize,
    pub lemmas: Option<String>,
    pub lemma_count: usize,
    pub fit_scope: FitScope,
    pub fingerprint: String,
}

/// The configuration a command actually ran with.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveConfig {
    pub ranker: RankerConfig,
    pub preprocessing: PreprocessingConfig,
}

pub struct Resolved {
    pub effective: EffectiveConfig,
    pub analyzer: Analyzer,
}

/// Resolves a relative path against the corpus root when it does not
/// exist as given.
pub fn resolve_input(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(root) = std::env::var_os(CORPUS_ROOT_ENV) {
            let candidate = Path::new(&root).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

fn require_input(path: &Path) -> CliResult<PathBuf> {
    let resolved = resolve_input(path);
    if !resolved.exists() {
        return Err(usage(format!("input not found: {}", path.display())));
    }
    Ok(resolved)
}

fn parse_scheme(name: &str, k1: Option<f64>, b: Option<f64>) -> CliResult<WeightingScheme> {
    let scheme = name.parse::<WeightingScheme>().map_err(usage)?;
    let scheme = match scheme {
        WeightingScheme::Bm25 { k1: dk1, b: db } => WeightingScheme::Bm25 { k1: k1.unwrap_or(dk1), b: b.unwrap_or(db) },
        other => other,
    };
    scheme.validate().map_err(|e| usage(e.to_string()))?;
    Ok(scheme)
}

impl RankerArgs {
    /// Merges defaults, the config file and explicit flags, in that order.
    pub fn resolve(&self) -> CliResult<Resolved> {
        let file = match &self.config {
            Some(path) => {
                let path = require_input(path)?;
                let text = fs::read_to_string(&path)?;
                serde_json::from_str::<ConfigFile>(&text)
                    .map_err(|e| usage(format!("{}: {e}", path.display())))?
            }
            None => ConfigFile::default(),
        };
        let defaults = RankerConfig::default();
        let k1 = self.k1.or(file.k1);
        let b = self.b.or(file.b);
        let rs_scheme = parse_scheme(self.rs_scheme.as_deref().or(file.rs_scheme.as_deref()).unwrap_or("bm25"), k1, b)?;
        let us_scheme = parse_scheme(self.us_scheme.as_deref().or(file.us_scheme.as_deref()).unwrap_or("bm25"), k1, b)?;
        let normalization = match self.normalization.as_deref().or(file.normalization.as_deref()) {
            Some(n) => n.parse::<Normalization>().map_err(usage)?,
            None => defaults.normalization,
        };
        let mut lambda1 = self.lambda1.or(file.lambda1).unwrap_or(defaults.lambda1);
        match self.model.or(file.model) {
            Some(Model::Rs) => lambda1 = 1.0,
            Some(Model::Us) => lambda1 = 0.0,
            Some(Model::Joint) | None => {}
        }
        let ranker = RankerConfig { lambda1, k: self.k.or(file.k).unwrap_or(defaults.k), rs_scheme, us_scheme, normalization };
        ranker.validate().map_err(|e| usage(e.to_string()))?;

        let no_stopwords = self.no_stopwords || file.no_stopwords.unwrap_or(false);
        let (stopwords, stopword_label) = match (no_stopwords, self.stopwords.as_ref().or(file.stopwords.as_ref())) {
            (true, _) => (StopwordList::empty(), "none".to_string()),
            (false, Some(path)) => {
                let path = require_input(path)?;
                (StopwordList::from_file(&path).map_err(|e| usage(e.to_string()))?, path.display().to_string())
            }
            (false, None) => (StopwordList::standard(), "standard".to_string()),
        };
        let (lemmas, lemma_label) = match self.lemmas.as_ref().or(file.lemmas.as_ref()) {
            Some(path) => {
                let path = require_input(path)?;
                (Some(LemmaMap::from_file(&path).map_err(|e| usage(e.to_string()))?), Some(path.display().to_string()))
            }
            None => (None, None),
        };
        let fit_scope = match self.fit_scope.as_deref().or(file.fit_scope.as_deref()) {
            Some(s) => s.parse::<FitScope>().map_err(usage)?,
            None => FitScope::FactsAndTrainHypotheses,
        };
        let stopword_count = stopwords.len();
        let lemma_count = lemmas.as_ref().map_or(0, LemmaMap::len);
        let analyzer = Analyzer::new(stopwords, lemmas);
        let preprocessing = PreprocessingConfig {
            stopwords: stopword_label,
            stopword_count,
            lemmas: lemma_label,
            lemma_count,
            fit_scope,
            fingerprint: analyzer.fingerprint(),
        };
        Ok(Resolved { effective: EffectiveConfig { ranker, preprocessing }, analyzer })
    }

    fn thread_pool(&self) -> CliResult<rayon::ThreadPool> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(jobs) = self.jobs {
            if jobs == 0 {
                return Err(usage("--jobs must be at least 1"));
            }
            builder = builder.num_threads(jobs);
        }
        builder.build().map_err(|e| CliError::Internal(e.into()))
    }
}

/// Loaded train and evaluation documents.
pub struct LoadedCorpus {
    pub train: CorpusDocument,
    pub questions: CorpusDocument,
    pub diagnostics: Diagnostics,
}

impl LoadedCorpus {
    pub fn explanation_kb(&self) -> CliResult<corpus::ExplanationKb> {
        let train_questions: Vec<_> =
            self.train.questions.iter().filter(|q| q.split == Split::Train).cloned().collect();
        let parsed = build_explanation_kb(&train_questions, Some(&self.train.facts))?;
        Ok(parsed.value)
    }
}

fn load_corpus(args: &CorpusArgs, manifest: &mut RunManifest) -> CliResult<LoadedCorpus> {
    let train_path = require_input(&args.train)?;
    let train = CorpusDocument::read(&train_path)?;
    if train.split != Split::Train {
        return Err(usage(format!("{} holds the {} split; --train needs the train split", train_path.display(), train.split)));
    }
    manifest.add_input(&train_path)?;
    let questions = match &args.questions {
        Some(path) => {
            let path = require_input(path)?;
            manifest.add_input(&path)?;
            let doc = CorpusDocument::read(&path)?;
            if doc.facts != train.facts {
                return Err(usage(format!("{} was ingested from a different fact KB than --train", path.display())));
            }
            doc
        }
        None => train.clone(),
    };
    let mut diagnostics = corpus::dangling_uids(&train.questions, &train.facts);
    if args.questions.is_some() {
        diagnostics.extend(corpus::dangling_uids(&questions.questions, &questions.facts));
    }
    Ok(LoadedCorpus { train, questions, diagnostics })
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Ingest(args) => cmd_ingest(&args),
        Command::Index(args) => cmd_index(&args),
        Command::Rank(args) => cmd_rank(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::ExportQa(args) => cmd_export_qa(&args),
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Internal(anyhow::anyhow!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: &str, manifest: &mut RunManifest) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, contents).map_err(|e| CliError::Internal(anyhow::anyhow!("cannot write {}: {e}", path.display())))?;
    manifest.add_output(path);
    Ok(())
}

fn report_diagnostics(diagnostics: &Diagnostics) {
    for d in diagnostics.items() {
        log::warn!("{}: {}", d.location, d.message);
    }
}

pub fn cmd_ingest(args: &IngestArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("ingest");
    manifest.phase("ingest");
    let tables = require_input(&args.tables)?;
    let questions = require_input(&args.questions)?;
    let types = match &args.table_types {
        Some(path) => TableTypeMap::from_file(&require_input(path)?)?,
        None => TableTypeMap::standard(),
    };
    manifest.add_input(&tables)?;
    manifest.add_input(&questions)?;
    let parsed = corpus::ingest(&tables, &questions, args.split, &types)?;
    report_diagnostics(&parsed.diagnostics);
    manifest.record_diagnostics(&parsed.diagnostics);
    manifest.set_config(&serde_json::json!({
        "split": args.split,
        "table_types": args.table_types.as_ref().map_or("standard".to_string(), |p| p.display().to_string()),
    }));
    manifest.notes.push(format!(
        "{} facts, {} questions, {} annotated",
        parsed.value.facts.len(),
        parsed.value.questions.len(),
        parsed.value.questions.iter().filter(|q| q.explanation.is_some()).count()
    ));
    write_file(&args.out, &parsed.value.to_json(), &mut manifest)?;
    let manifest_path = args.manifest.clone().unwrap_or_else(|| sibling(&args.out, "manifest.json"));
    manifest.write(&manifest_path)?;
    eprintln!(
        "ingested {} facts and {} questions ({} warnings) -> {}",
        parsed.value.facts.len(),
        parsed.value.questions.len(),
        parsed.diagnostics.len(),
        args.out.display()
    );
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

pub fn cmd_index(args: &IndexArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("index");
    manifest.phase("load");
    let resolved = args.ranker.resolve()?;
    let scheme = parse_scheme(&args.scheme, args.ranker.k1, args.ranker.b)?;
    let corpus = load_corpus(&args.corpus, &mut manifest)?;
    manifest.record_diagnostics(&corpus.diagnostics);
    let ekb = corpus.explanation_kb()?;
    manifest.phase("fit");
    let ranker = Ranker::new(
        &corpus.train.facts,
        &ekb,
        resolved.analyzer.clone(),
        resolved.effective.preprocessing.fit_scope,
        &[scheme],
    )?;
    let artifact = ranker.index_artifact(&scheme)?;
    manifest.set_config(&serde_json::json!({ "scheme": scheme, "preprocessing": resolved.effective.preprocessing }));
    manifest.phase("write");
    write_file(&args.out, &artifact.to_json(), &mut manifest)?;
    manifest.write(&sibling(&args.out, "manifest.json"))?;
    Ok(())
}

fn build_ranker<'a>(
    corpus: &'a LoadedCorpus,
    ekb: &'a corpus::ExplanationKb,
    resolved: &Resolved,
    index: Option<&Path>,
    manifest: &mut RunManifest,
) -> CliResult<Ranker<'a>> {
    let config = &resolved.effective.ranker;
    let fit_scope = resolved.effective.preprocessing.fit_scope;
    match index {
        Some(path) => {
            let path = require_input(path)?;
            manifest.add_input(&path)?;
            let artifact = IndexArtifact::read(&path).map_err(|e| usage(e.to_string()))?;
            if artifact.scheme != config.rs_scheme {
                return Err(usage(format!(
                    "index {} holds {:?} vectors but the relevance scheme is {:?}",
                    path.display(),
                    artifact.scheme,
                    config.rs_scheme
                )));
            }
            if artifact.fit_scope != fit_scope.to_string() {
                return Err(usage(format!("index was fitted on `{}`, requested `{fit_scope}`", artifact.fit_scope)));
            }
            Ranker::from_index(&corpus.train.facts, ekb, resolved.analyzer.clone(), artifact, &[config.us_scheme])
                .map_err(|e| usage(e.to_string()))
        }
        None => Ok(Ranker::for_config(&corpus.train.facts, ekb, resolved.analyzer.clone(), fit_scope, config)?),
    }
}

fn format_float(x: f64) -> String {
    format!("{x:.12}")
}

pub fn cmd_rank(args: &RankArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("rank");
    manifest.phase("load");
    let resolved = args.ranker.resolve()?;
    let config = resolved.effective.ranker;
    let corpus = load_corpus(&args.corpus, &mut manifest)?;
    manifest.record_diagnostics(&corpus.diagnostics);

    let mut questions: Vec<&corpus::Question> = corpus.questions.questions.iter().collect();
    questions.sort_by(|a, b| a.qid.cmp(&b.qid));
    if let Some(filter) = &args.qids {
        let known: BTreeSet<&str> = questions.iter().map(|q| q.qid.as_str()).collect();
        let unknown: Vec<&str> = filter.iter().map(String::as_str).filter(|q| !known.contains(q)).collect();
        if !unknown.is_empty() {
            return Err(usage(format!("unknown question ids: {}", unknown.join(", "))));
        }
        let wanted: BTreeSet<&str> = filter.iter().map(String::as_str).collect();
        questions.retain(|q| wanted.contains(q.qid.as_str()));
    }

    manifest.phase("index");
    let ekb = corpus.explanation_kb()?;
    let ranker = build_ranker(&corpus, &ekb, &resolved, args.index.as_deref(), &mut manifest)?;
    let pool = args.ranker.thread_pool()?;

    manifest.phase("rank");
    let results: Vec<(RankedList, f64)> = pool.install(|| {
        questions
            .par_iter()
            .map(|q| {
                let started = Instant::now();
                let h = q.correct_hypothesis()?;
                let list = ranker.combined_ranking(&h, &config)?;
                Ok((list, started.elapsed().as_secs_f64()))
            })
            .collect::<Result<_, CliError>>()
    })?;

    manifest.phase("write");
    let limit = if args.full { usize::MAX } else { args.top.unwrap_or(DEFAULT_TOP) };
    let mut rankings = String::from("qid\trank\tfact_uid\tcombined\trs\tus\n");
    let mut submission = String::new();
    for (list, _) in &results {
        for (i, r) in list.records.iter().take(limit).enumerate() {
            let _ = writeln!(
                rankings,
                "{}\t{}\t{}\t{}\t{}\t{}",
                list.query_qid,
                i + 1,
                r.fact_uid,
                format_float(r.combined_score),
                format_float(r.rs_raw),
                format_float(r.us_raw)
            );
            let _ = writeln!(submission, "{}\t{}", list.query_qid, r.fact_uid);
        }
    }
    create_dir(&args.out_dir)?;
    write_file(&args.out_dir.join("rankings.tsv"), &rankings, &mut manifest)?;
    write_file(&args.out_dir.join("submission.tsv"), &submission, &mut manifest)?;

    let mean_latency_ms =
        if results.is_empty() { 0.0 } else { results.iter().map(|(_, t)| t).sum::<f64>() / results.len() as f64 * 1e3 };
    manifest.set_config(&resolved.effective);
    manifest.notes.push(format!("{} questions ranked; mean per-question latency {mean_latency_ms:.3} ms", results.len()));
    manifest.notes.push(if limit == usize::MAX { "full rankings".into() } else { format!("truncated to top {limit}") });
    manifest.write(&args.out_dir.join("manifest.json"))?;
    println!("ranked {} questions, mean per-question latency {:.3} ms", results.len(), mean_latency_ms);
    Ok(())
}

/// Everything written to `report.json`. Holds no timings, so identical
/// inputs always produce identical bytes.
#[derive(Debug, Serialize)]
pub struct ReportDocument {
    pub split: Split,
    pub config: EffectiveConfig,
    pub settings: EvalSettings,
    pub source: String,
    pub primary: EvalReport,
    pub components: Vec<EvalReport>,
    pub ablation: Vec<EvalReport>,
    pub knn_sweep: Vec<SweepRow>,
    pub excluded_questions: usize,
    pub truncated_gold_facts: usize,
}

fn eval_settings(args: &EvalArgs) -> CliResult<EvalSettings> {
    let mut settings = EvalSettings::default();
    if let Some(spec) = &args.length_bins {
        settings.length_bins = LengthBins::parse(spec).map_err(|e| usage(e.to_string()))?;
    }
    if let Some(ks) = &args.precision_k {
        if ks.contains(&0) {
            return Err(usage("precision@K needs K >= 1"));
        }
        settings.precision_ks = ks.clone();
    }
    Ok(settings)
}

fn component_configs(config: &RankerConfig) -> Vec<RankerConfig> {
    vec![
        RankerConfig { lambda1: 1.0, ..*config },
        RankerConfig { lambda1: 0.0, ..*config },
    ]
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("eval");
    manifest.phase("load");
    let resolved = args.ranker.resolve()?;
    let config = resolved.effective.ranker;
    let settings = eval_settings(args)?;
    let corpus = load_corpus(&args.corpus, &mut manifest)?;
    let gold = eval::gold_sets(&corpus.questions.questions, &corpus.questions.facts, &resolved.analyzer);
    manifest.record_diagnostics(&corpus.diagnostics);
    let excluded = corpus.questions.questions.len() - gold.value.len();
    if gold.value.is_empty() {
        return Err(usage(format!("no gold explanations in the {} split", corpus.questions.split)));
    }
    if let Some(ks) = &args.sweep_k {
        if ks.is_empty() || ks.contains(&0) {
            return Err(usage("--sweep-k values must be positive"));
        }
    }
    let pool = args.ranker.thread_pool()?;
    create_dir(&args.out_dir)?;

    let mut document = ReportDocument {
        split: corpus.questions.split,
        config: resolved.effective.clone(),
        settings: settings.clone(),
        source: String::new(),
        primary: empty_report(),
        components: Vec::new(),
        ablation: Vec::new(),
        knn_sweep: Vec::new(),
        excluded_questions: excluded,
        truncated_gold_facts: 0,
    };

    if let Some(path) = &args.submission {
        manifest.phase("score");
        let path = require_input(path)?;
        manifest.add_input(&path)?;
        let submission = eval::read_submission(&path).map_err(|e| usage(e.to_string()))?;
        let misses = eval::truncation_misses(&submission, &gold.value);
        if misses > 0 {
            log::warn!("{misses} gold facts fall outside the submitted rankings and take worst-case ranks");
        }
        let ranks = eval::score_submission(&submission, &gold.value, corpus.questions.facts.len());
        document.source = format!("submission {}", path.display());
        document.primary = EvalReport::from_ranks("submission", &ranks, &settings).map_err(|e| usage(e.to_string()))?;
        document.truncated_gold_facts = misses;
    } else {
        manifest.phase("index");
        let ekb = corpus.explanation_kb()?;
        let mut ranker = Ranker::for_config(
            &corpus.train.facts,
            &ekb,
            resolved.analyzer.clone(),
            resolved.effective.preprocessing.fit_scope,
            &config,
        )?;
        if args.ablate {
            ranker.add_scheme(WeightingScheme::TfIdf)?;
            ranker.add_scheme(WeightingScheme::bm25())?;
        }
        manifest.phase("rank+score");
        document.source = "fused ranking".into();
        pool.install(|| -> CliResult<()> {
            document.primary = eval::evaluate_model(&ranker, &gold.value, &config, &settings)?;
            for c in component_configs(&config) {
                document.components.push(eval::evaluate_model(&ranker, &gold.value, &c, &settings)?);
            }
            if args.ablate {
                for c in eval::ablation_configs(&config) {
                    document.ablation.push(eval::evaluate_model(&ranker, &gold.value, &c, &settings)?);
                }
            }
            if let Some(ks) = &args.sweep_k {
                document.knn_sweep = eval::knn_sweep(&ranker, &gold.value, &config, ks)?;
            }
            Ok(())
        })?;
    }

    manifest.phase("write");
    write_report(&args.out_dir, &document, &settings, &mut manifest)?;
    manifest.set_config(&resolved.effective);
    manifest.write(&args.out_dir.join("manifest.json"))?;
    println!("{}: MAP {:.4} over {} questions", document.primary.model, document.primary.overall_map, document.primary.questions);
    for r in document.components.iter().chain(&document.ablation) {
        println!("{}: MAP {:.4}", r.model, r.overall_map);
    }
    Ok(())
}

fn empty_report() -> EvalReport {
    EvalReport {
        model: String::new(),
        questions: 0,
        overall_map: 0.0,
        map_by_role: Default::default(),
        map_by_overlap: Default::default(),
        map_by_inference: Default::default(),
        map_by_explanation_length: Vec::new(),
        precision_at_k: Vec::new(),
        per_question: Vec::new(),
    }
}

fn write_report(out_dir: &Path, document: &ReportDocument, settings: &EvalSettings, manifest: &mut RunManifest) -> CliResult<()> {
    let mut json = serde_json::to_string_pretty(document).map_err(|e| CliError::Internal(e.into()))?;
    json.push('\n');
    write_file(&out_dir.join("report.json"), &json, manifest)?;
    let figures = out_dir.join("figures");
    let curves: Vec<EvalReport> = std::iter::once(document.primary.clone()).chain(document.components.iter().cloned()).collect();
    write_file(&figures.join("map_by_length.csv"), &eval::map_by_length_csv(&curves, &settings.length_bins), manifest)?;
    write_file(&figures.join("precision_at_k.csv"), &eval::precision_at_k_csv(&curves), manifest)?;
    if !document.knn_sweep.is_empty() {
        write_file(&figures.join("knn_sweep.csv"), &eval::knn_sweep_csv(&document.knn_sweep), manifest)?;
    }
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("sweep");
    manifest.phase("load");
    if args.k_values.is_empty() || args.k_values.contains(&0) {
        return Err(usage("k values must be positive"));
    }
    let resolved = args.ranker.resolve()?;
    let config = resolved.effective.ranker;
    let corpus = load_corpus(&args.corpus, &mut manifest)?;
    let gold = eval::gold_sets(&corpus.questions.questions, &corpus.questions.facts, &resolved.analyzer);
    if gold.value.is_empty() {
        return Err(usage(format!("no gold explanations in the {} split", corpus.questions.split)));
    }
    let ekb = corpus.explanation_kb()?;
    manifest.phase("index");
    let ranker = Ranker::for_config(
        &corpus.train.facts,
        &ekb,
        resolved.analyzer.clone(),
        resolved.effective.preprocessing.fit_scope,
        &config,
    )?;
    manifest.phase("sweep");
    let pool = args.ranker.thread_pool()?;
    let rows = pool.install(|| eval::knn_sweep(&ranker, &gold.value, &config, &args.k_values))?;
    manifest.phase("write");
    create_dir(&args.out_dir)?;
    write_file(&args.out_dir.join("figures").join("knn_sweep.csv"), &eval::knn_sweep_csv(&rows), &mut manifest)?;
    manifest.set_config(&resolved.effective);
    manifest.write(&args.out_dir.join("manifest.json"))?;
    for r in &rows {
        println!("k={}: MAP {:.4}", r.k, r.map);
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct QaRecord<'a> {
    pub qid: &'a str,
    pub label: &'a str,
    pub question: &'a str,
    pub candidate: &'a str,
    pub is_correct: bool,
    pub explanation: Vec<&'a str>,
    pub explanation_uids: Vec<String>,
}

pub fn cmd_export_qa(args: &ExportArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("export-qa");
    manifest.phase("load");
    if args.top_k == 0 {
        return Err(usage("--top-k must be at least 1"));
    }
    let resolved = args.ranker.resolve()?;
    let config = resolved.effective.ranker;
    let corpus = load_corpus(&args.corpus, &mut manifest)?;
    let ekb = corpus.explanation_kb()?;
    manifest.phase("index");
    let ranker = Ranker::for_config(
        &corpus.train.facts,
        &ekb,
        resolved.analyzer.clone(),
        resolved.effective.preprocessing.fit_scope,
        &config,
    )?;
    let mut questions: Vec<&corpus::Question> = corpus.questions.questions.iter().collect();
    questions.sort_by(|a, b| a.qid.cmp(&b.qid));
    let jobs: Vec<(&corpus::Question, &corpus::Choice)> =
        questions.iter().flat_map(|q| q.choices.iter().map(move |c| (*q, c))).collect();

    manifest.phase("rank");
    let pool = args.ranker.thread_pool()?;
    let kb = &corpus.train.facts;
    let records: Vec<String> = pool.install(|| {
        jobs.par_iter()
            .map(|(q, choice)| {
                let h = build_hypothesis(q, &choice.label)?;
                let uids = ranker.explain_topk(&h, &config, args.top_k)?;
                let explanation = uids.iter().filter_map(|u| kb.get(u)).map(|f| f.text.as_str()).collect();
                let record = QaRecord {
                    qid: &q.qid,
                    label: &choice.label,
                    question: &q.stem,
                    candidate: &choice.text,
                    is_correct: h.is_correct_candidate,
                    explanation,
                    explanation_uids: uids,
                };
                serde_json::to_string(&record).map_err(|e| CliError::Internal(e.into()))
            })
            .collect::<Result<_, CliError>>()
    })?;
    manifest.phase("write");
    let mut out = records.join("\n");
    out.push('\n');
    write_file(&args.out, &out, &mut manifest)?;
    manifest.set_config(&serde_json::json!({ "effective": resolved.effective, "top_k": args.top_k }));
    manifest.write(&sibling(&args.out, "manifest.json"))?;
    eprintln!("exported {} records -> {}", records.len(), args.out.display());
    Ok(())
}

/// Ranking of a single hypothesis text under a configuration, for tests
/// and small tools.
pub fn rank_text(ranker: &Ranker<'_>, qid: &str, text: &str, config: &RankerConfig) -> Result<RankedList, RankError> {
    let h = corpus::Hypothesis { source_qid: qid.to_string(), text: text.to_string(), is_correct_candidate: true };
    ranker.combined_ranking(&h, config)
}

/// Gold sets and the MAP of one configuration, for callers that do not
/// need the full report.
pub fn evaluate_map(ranker: &Ranker<'_>, gold: &[GoldSet], config: &RankerConfig) -> Result<f64, EvalModelError> {
    let report = eval::evaluate_model(ranker, gold, config, &EvalSettings::default())?;
    Ok(report.overall_map)
}
