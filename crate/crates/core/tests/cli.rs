mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::mini_dir;
use tempfile::TempDir;

fn unirank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unirank"))
        .args(args)
        .env_remove("UNIRANK_CORPUS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = unirank(args);
    assert!(
        out.status.success(),
        "unirank {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
    train: PathBuf,
    dev: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let train = dir.path().join("train.json");
        let dev = dir.path().join("dev.json");
        let tables = mini_dir().join("tables");
        for (split, out) in [("train", &train), ("dev", &dev)] {
            let questions = mini_dir().join(format!("questions.{split}.tsv"));
            ok(&["ingest", "--tables", s(&tables), "--questions", s(&questions), "--split", split, "--out", s(out)]);
        }
        Self { dir, train, dev }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn corpus_args(&self) -> Vec<&str> {
        vec!["--train", s(&self.train), "--questions", s(&self.dev)]
    }
}

#[test]
fn ingest_writes_document_and_manifest() {
    let ws = Workspace::new();
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&ws.train).unwrap()).unwrap();
    assert_eq!(doc["facts"].as_array().unwrap().len(), 43);
    assert_eq!(doc["questions"].as_array().unwrap().len(), 12);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ws.path("train.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["diagnostics"]["warning_count"], 0);
    assert_eq!(manifest["command"], "ingest");
}

#[test]
fn ingest_is_byte_identical_across_runs_and_round_trips() {
    let ws = Workspace::new();
    let again = ws.path("again.json");
    let questions = mini_dir().join("questions.train.tsv");
    ok(&["ingest", "--tables", s(&mini_dir().join("tables")), "--questions", s(&questions), "--split", "train", "--out", s(&again)]);
    let first = fs::read_to_string(&ws.train).unwrap();
    assert_eq!(first, fs::read_to_string(&again).unwrap());
    let doc = unirank::CorpusDocument::from_json(&first).unwrap();
    assert_eq!(doc.to_json(), first);
}

#[test]
fn ingest_counts_warnings_for_malformed_rows() {
    let ws = Workspace::new();
    let questions = ws.path("q.tsv");
    fs::write(
        &questions,
        "QuestionID\tquestion\tAnswerKey\texplanation\n\
         Q1\tWhat makes heat? (A) friction (B) water\tA\t0a96-01|CENTRAL nosuchfact|GROUNDING\n\
         Q2\tBroken row (A) x (B) y\t\t\n\
         Q3\tWhat? (A) x (B) y\tC\t\n",
    )
    .unwrap();
    let out = ws.path("q.json");
    let manifest = ws.path("q.manifest.json");
    ok(&[
        "ingest", "--tables", s(&mini_dir().join("tables")), "--questions", s(&questions), "--split", "train",
        "--out", s(&out), "--manifest", s(&manifest),
    ]);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["diagnostics"]["warning_count"], 3);
    let doc = unirank::CorpusDocument::read(&out).unwrap();
    assert_eq!(doc.questions.len(), 1);
}

#[test]
fn usage_errors_exit_with_two() {
    let ws = Workspace::new();
    let missing = ws.path("missing.tsv");
    let out = unirank(&[
        "ingest", "--tables", s(&mini_dir().join("tables")), "--questions", s(&missing), "--split", "dev", "--out",
        s(&ws.path("x.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.tsv"));

    let mut args = vec!["rank"];
    args.extend(ws.corpus_args());
    let dir = ws.path("r");
    args.extend(["--out-dir", s(&dir), "--qids", "D01,NOPE"]);
    let out = unirank(&args);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NOPE"));

    for bad in [["--lambda1", "1.5"], ["--k", "0"], ["--rs-scheme", "lsi"], ["--normalization", "zscore"]] {
        let mut args = vec!["rank"];
        args.extend(ws.corpus_args());
        args.extend(["--out-dir", s(&dir)]);
        args.extend(bad);
        assert_eq!(unirank(&args).status.code(), Some(2), "{bad:?}");
    }

    // the train slot must hold a train document
    let out = unirank(&["rank", "--train", s(&ws.dev), "--out-dir", s(&dir)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_without_gold_exits_with_two() {
    let ws = Workspace::new();
    let questions = ws.path("nogold.tsv");
    fs::write(&questions, "QuestionID\tquestion\tAnswerKey\nX1\tWhat makes heat? (A) friction (B) water\tA\n").unwrap();
    let doc = ws.path("nogold.json");
    ok(&["ingest", "--tables", s(&mini_dir().join("tables")), "--questions", s(&questions), "--split", "test", "--out", s(&doc)]);
    let out = unirank(&["eval", "--train", s(&ws.train), "--questions", s(&doc), "--out-dir", s(&ws.path("e"))]);
    assert_eq!(out.status.code(), Some(2));
}

fn rank(ws: &Workspace, dir: &str, extra: &[&str]) -> String {
    let out_dir = ws.path(dir);
    let mut args = vec!["rank"];
    args.extend(ws.corpus_args());
    args.extend(["--out-dir", s(&out_dir), "--full"]);
    args.extend(extra);
    ok(&args);
    fs::read_to_string(out_dir.join("rankings.tsv")).unwrap()
}

fn uid_column(rankings: &str) -> Vec<String> {
    rankings.lines().skip(1).map(|l| l.split('\t').take(3).collect::<Vec<_>>().join("\t")).collect()
}

#[test]
fn rank_is_deterministic_across_thread_counts() {
    let ws = Workspace::new();
    let one = rank(&ws, "a", &["--jobs", "1"]);
    let four = rank(&ws, "b", &["--jobs", "4"]);
    assert_eq!(one, four);
    let header = one.lines().next().unwrap();
    assert_eq!(header, "qid\trank\tfact_uid\tcombined\trs\tus");
    // 6 dev questions x 43 facts
    assert_eq!(one.lines().count(), 1 + 6 * 43);
    let qids: Vec<&str> = one.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    let mut sorted = qids.clone();
    sorted.sort();
    assert_eq!(qids, sorted);
}

#[test]
fn lambda_one_matches_relevance_model() {
    let ws = Workspace::new();
    let by_lambda = rank(&ws, "l1", &["--lambda1", "1.0"]);
    let by_model = rank(&ws, "rs", &["--model", "rs"]);
    assert_eq!(uid_column(&by_lambda), uid_column(&by_model));
    let by_zero = rank(&ws, "l0", &["--lambda1", "0"]);
    let us_model = rank(&ws, "us", &["--model", "us"]);
    assert_eq!(uid_column(&by_zero), uid_column(&us_model));
}

#[test]
fn top_limits_rows_per_question() {
    let ws = Workspace::new();
    let out_dir = ws.path("top");
    let mut args = vec!["rank"];
    args.extend(ws.corpus_args());
    args.extend(["--out-dir", s(&out_dir), "--top", "7", "--qids", "D02,D01"]);
    let out = ok(&args);
    assert!(String::from_utf8_lossy(&out.stdout).contains("mean per-question latency"));
    let sub = fs::read_to_string(out_dir.join("submission.tsv")).unwrap();
    assert_eq!(sub.lines().count(), 14);
    assert!(sub.lines().take(7).all(|l| l.starts_with("D01\t")));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["ranker"]["lambda1"], 0.83);
    assert_eq!(manifest["config"]["preprocessing"]["stopwords"], "standard");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let ws = Workspace::new();
    let config = ws.path("config.json");
    fs::write(&config, r#"{"lambda1": 0.5, "k": 3, "rs_scheme": "tfidf"}"#).unwrap();
    let out_dir = ws.path("cfg");
    let mut args = vec!["rank"];
    args.extend(ws.corpus_args());
    args.extend(["--out-dir", s(&out_dir), "--config", s(&config), "--k", "7"]);
    ok(&args);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    let ranker = &manifest["config"]["ranker"];
    assert_eq!(ranker["lambda1"], 0.5);
    assert_eq!(ranker["k"], 7);
    assert_eq!(ranker["rs_scheme"]["kind"], "tfidf");

    fs::write(&config, r#"{"lambda": 0.5}"#).unwrap();
    let mut args = vec!["rank"];
    args.extend(ws.corpus_args());
    args.extend(["--out-dir", s(&out_dir), "--config", s(&config)]);
    assert_eq!(unirank(&args).status.code(), Some(2));
}

fn eval(ws: &Workspace, dir: &str, extra: &[&str]) -> PathBuf {
    let out_dir = ws.path(dir);
    let mut args = vec!["eval"];
    args.extend(ws.corpus_args());
    args.extend(["--out-dir", s(&out_dir)]);
    args.extend(extra);
    ok(&args);
    out_dir
}

#[test]
fn eval_report_is_byte_identical_across_runs() {
    let ws = Workspace::new();
    let a = eval(&ws, "e1", &["--ablate", "--sweep-k", "1,5,100", "--jobs", "1"]);
    let b = eval(&ws, "e2", &["--ablate", "--sweep-k", "1,5,100", "--jobs", "3"]);
    for file in ["report.json", "figures/map_by_length.csv", "figures/precision_at_k.csv", "figures/knn_sweep.csv"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["ablation"].as_array().unwrap().len(), 8);
    assert_eq!(report["components"].as_array().unwrap().len(), 2);
    assert_eq!(report["knn_sweep"].as_array().unwrap().len(), 3);
    assert_eq!(report["primary"]["model"], "RS BM25 + US BM25");
    let csv = fs::read_to_string(a.join("figures/map_by_length.csv")).unwrap();
    assert!(csv.starts_with("# length bins:"));
}

#[test]
fn scoring_a_full_submission_matches_the_fused_run() {
    let ws = Workspace::new();
    let fused = eval(&ws, "fused", &[]);
    rank(&ws, "ranked", &[]);
    let sub = ws.path("ranked").join("submission.tsv");
    let scored = eval(&ws, "scored", &["--submission", s(&sub)]);
    let read = |dir: &Path| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
    };
    let (f, s2) = (read(&fused), read(&scored));
    assert_eq!(f["primary"]["overall_map"], s2["primary"]["overall_map"]);
    assert_eq!(f["primary"]["map_by_role"], s2["primary"]["map_by_role"]);
    assert_eq!(f["primary"]["per_question"], s2["primary"]["per_question"]);
    assert_eq!(s2["truncated_gold_facts"], 0);
}

#[test]
fn truncated_submission_is_flagged() {
    let ws = Workspace::new();
    let out_dir = ws.path("t");
    let mut args = vec!["rank"];
    args.extend(ws.corpus_args());
    args.extend(["--out-dir", s(&out_dir), "--top", "2"]);
    ok(&args);
    let scored = eval(&ws, "ts", &["--submission", s(&out_dir.join("submission.tsv"))]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(scored.join("report.json")).unwrap()).unwrap();
    assert!(report["truncated_gold_facts"].as_u64().unwrap() > 0);

    let bad = ws.path("bad.tsv");
    fs::write(&bad, "D01 a1f0-01\n").unwrap();
    let bad_dir = ws.path("bad");
    let mut args = vec!["eval"];
    args.extend(ws.corpus_args());
    args.extend(["--out-dir", s(&bad_dir), "--submission", s(&bad)]);
    assert_eq!(unirank(&args).status.code(), Some(2));
}

#[test]
fn index_round_trip_gives_identical_rankings() {
    let ws = Workspace::new();
    let index = ws.path("bm25.index.json");
    ok(&["index", "--train", s(&ws.train), "--scheme", "bm25", "--out", s(&index)]);
    let fresh = rank(&ws, "fresh", &[]);
    let reused = rank(&ws, "reused", &["--index", s(&index)]);
    assert_eq!(fresh, reused);

    // preprocessing must match the index
    let mut args = vec!["rank"];
    args.extend(ws.corpus_args());
    let dir = ws.path("mismatch");
    args.extend(["--out-dir", s(&dir), "--index", s(&index), "--no-stopwords"]);
    assert_eq!(unirank(&args).status.code(), Some(2));
}

#[test]
fn export_qa_emits_one_record_per_choice() {
    let ws = Workspace::new();
    let out = ws.path("qa.jsonl");
    let mut args = vec!["export-qa"];
    args.extend(ws.corpus_args());
    args.extend(["--out", s(&out), "--top-k", "4"]);
    ok(&args);
    let dev = unirank::CorpusDocument::read(&ws.dev).unwrap();
    let choices: usize = dev.questions.iter().map(|q| q.choices.len()).sum();
    let lines: Vec<serde_json::Value> =
        fs::read_to_string(&out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), choices);
    assert_eq!(lines.iter().filter(|r| r["is_correct"] == true).count(), dev.questions.len());
    for r in &lines {
        assert_eq!(r["explanation"].as_array().unwrap().len(), 4);
        assert_eq!(r["explanation_uids"].as_array().unwrap().len(), 4);
    }

    let mut args = vec!["export-qa"];
    args.extend(ws.corpus_args());
    args.extend(["--out", s(&out), "--top-k", "0"]);
    assert_eq!(unirank(&args).status.code(), Some(2));
}

#[test]
fn relative_inputs_resolve_against_corpus_root() {
    let ws = Workspace::new();
    let out_dir = ws.path("rel");
    let out = Command::new(env!("CARGO_BIN_EXE_unirank"))
        .args(["rank", "--train", "train.json", "--questions", "dev.json", "--out-dir", s(&out_dir), "--top", "1"])
        .env("UNIRANK_CORPUS", ws.dir.path())
        .current_dir(std::env::temp_dir())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(out_dir.join("submission.tsv")).unwrap().lines().count(), 6);
}

#[test]
fn sweep_writes_curve() {
    let ws = Workspace::new();
    let out_dir = ws.path("sweep");
    let mut args = vec!["sweep"];
    args.extend(ws.corpus_args());
    args.extend(["--out-dir", s(&out_dir), "--k-values", "1,3,100"]);
    ok(&args);
    let csv = fs::read_to_string(out_dir.join("figures/knn_sweep.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 4);
}
