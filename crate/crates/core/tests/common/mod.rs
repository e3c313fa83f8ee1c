#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unirank::corpus::{self, Choice, ExplanationEntry, Question};
use unirank::{
    Analyzer, CorpusDocument, Explanation, ExplanationKb, Fact, FactKb, Hypothesis, InferenceType, Role, Split,
    TableTypeMap, WeightingScheme,
};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn mini_dir() -> PathBuf {
    data_dir().join("mini")
}

pub fn load_mini(split: Split) -> CorpusDocument {
    let name = format!("questions.{split}.tsv");
    let parsed =
        corpus::ingest(&mini_dir().join("tables"), &mini_dir().join(name), split, &TableTypeMap::standard()).unwrap();
    assert!(parsed.diagnostics.is_empty(), "mini corpus should ingest cleanly: {:?}", parsed.diagnostics.items());
    parsed.value
}

pub fn mini_ekb(train: &CorpusDocument) -> ExplanationKb {
    corpus::build_explanation_kb(&train.questions, Some(&train.facts)).unwrap().value
}

/// Straightforward re-implementation of the weighting and cosine formulas
/// over string-keyed maps, used as an oracle for the indexed scorer.
pub struct NaiveScorer {
    n: f64,
    df: HashMap<String, f64>,
    avgdl: f64,
}

impl NaiveScorer {
    pub fn fit(docs: &[Vec<String>]) -> Self {
        let mut df: HashMap<String, f64> = HashMap::new();
        let mut total = 0usize;
        for d in docs {
            total += d.len();
            let mut seen: Vec<&String> = d.iter().collect();
            seen.sort();
            seen.dedup();
            for t in seen {
                *df.entry(t.clone()).or_default() += 1.0;
            }
        }
        Self { n: docs.len() as f64, df, avgdl: total as f64 / docs.len() as f64 }
    }

    pub fn weights(&self, doc: &[String], scheme: &WeightingScheme) -> HashMap<String, f64> {
        let mut tf: HashMap<String, f64> = HashMap::new();
        for t in doc {
            if self.df.contains_key(t) {
                *tf.entry(t.clone()).or_default() += 1.0;
            }
        }
        let len = doc.len() as f64;
        tf.into_iter()
            .map(|(t, f)| {
                let df = self.df[&t];
                let w = match *scheme {
                    WeightingScheme::TfIdf => f * (((self.n + 1.0) / (df + 1.0)).ln() + 1.0),
                    WeightingScheme::Bm25 { k1, b } => {
                        let idf = (1.0 + (self.n - df + 0.5) / (df + 0.5)).ln().max(0.0);
                        idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * len / self.avgdl))
                    }
                };
                (t, w)
            })
            .filter(|(_, w)| *w != 0.0)
            .collect()
    }

    pub fn cosine(x: &HashMap<String, f64>, y: &HashMap<String, f64>) -> f64 {
        let dot: f64 = x.iter().filter_map(|(t, a)| y.get(t).map(|b| a * b)).sum();
        let nx = x.values().map(|v| v * v).sum::<f64>().sqrt();
        let ny = y.values().map(|v| v * v).sum::<f64>().sqrt();
        if nx == 0.0 || ny == 0.0 {
            0.0
        } else {
            (dot / (nx * ny)).clamp(0.0, 1.0)
        }
    }
}

/// Brute-force relevance and unification scores in KB order, fitted on
/// facts plus bank hypotheses.
pub fn brute_force_components(
    kb: &FactKb,
    ekb: &ExplanationKb,
    analyzer: &Analyzer,
    h: &Hypothesis,
    rs_scheme: &WeightingScheme,
    us_scheme: &WeightingScheme,
    k: usize,
) -> (Vec<f64>, Vec<f64>) {
    let tok = |s: &str| analyzer.analyze(s).into_tokens();
    let fact_docs: Vec<Vec<String>> = kb.iter().map(|f| tok(&f.text)).collect();
    let hyp_docs: Vec<Vec<String>> = ekb.iter().map(|p| tok(&p.hypothesis.text)).collect();
    let all: Vec<Vec<String>> = fact_docs.iter().chain(&hyp_docs).cloned().collect();
    let scorer = NaiveScorer::fit(&all);
    let query = tok(&h.text);

    let qv = scorer.weights(&query, rs_scheme);
    let rs: Vec<f64> = fact_docs.iter().map(|d| NaiveScorer::cosine(&qv, &scorer.weights(d, rs_scheme))).collect();

    let qv = scorer.weights(&query, us_scheme);
    let mut sims: Vec<(f64, &str, usize)> = ekb
        .iter()
        .enumerate()
        .filter(|(_, p)| p.hypothesis.text != h.text)
        .map(|(i, p)| (NaiveScorer::cosine(&qv, &scorer.weights(&hyp_docs[i], us_scheme)), p.hypothesis.source_qid.as_str(), i))
        .collect();
    sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)).then(a.2.cmp(&b.2)));
    sims.truncate(k);
    let mut us = vec![0.0; kb.len()];
    for (fi, f) in kb.iter().enumerate() {
        for &(sim, _, pi) in &sims {
            if ekb.pairs()[pi].explanation.contains(&f.uid) {
                us[fi] += sim;
            }
        }
    }
    (rs, us)
}

const NOUNS: &[&str] = &[
    "friction", "gravity", "heat", "light", "sound", "energy", "water", "ice", "rock", "plant", "animal", "metal",
    "wood", "magnet", "sun", "moon", "earth", "air", "cloud", "rain", "seed", "leaf", "root", "soil", "river", "ocean",
    "battery", "circuit", "wire", "bulb", "lens", "mirror", "shadow", "season", "winter", "summer", "weather", "storm",
    "volcano", "mineral", "fossil", "cell", "organ", "muscle", "bone", "blood", "oxygen", "carbon", "nutrient", "food",
];
const VERBS: &[&str] = &[
    "causes", "produces", "requires", "contains", "absorbs", "reflects", "conducts", "transfers", "converts",
    "increases", "decreases", "protects", "stores", "releases", "measures", "attracts",
];
const ADJS: &[&str] = &[
    "hot", "cold", "warm", "bright", "dark", "heavy", "light", "solid", "liquid", "gaseous", "large", "small", "fast",
    "slow", "living", "nonliving",
];

/// Deterministic synthetic corpus shaped like a science fact bank.
pub struct Synthetic {
    pub facts: FactKb,
    pub train: Vec<Question>,
    pub dev: Vec<Question>,
}

fn word<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.gen_range(0..pool.len())]
}

fn sentence(rng: &mut ChaCha8Rng, vocab: &[String]) -> String {
    let len = rng.gen_range(5..12);
    let mut words = Vec::with_capacity(len);
    for i in 0..len {
        let w = match i % 3 {
            0 => word(rng, NOUNS).to_string(),
            1 => word(rng, VERBS).to_string(),
            _ if rng.gen_bool(0.5) => word(rng, ADJS).to_string(),
            _ => vocab[rng.gen_range(0..vocab.len())].clone(),
        };
        words.push(w);
    }
    words.join(" ")
}

pub fn synthetic(seed: u64, facts: usize, train: usize, dev: usize) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<String> = (0..4000).map(|i| format!("term{i}")).collect();
    let types = [InferenceType::Retrieval, InferenceType::InferenceSupporting, InferenceType::ComplexInference];
    let kb: Vec<Fact> = (0..facts)
        .map(|i| Fact {
            uid: format!("{:08x}", (i as u64).wrapping_mul(2654435761) ^ seed),
            text: sentence(&mut rng, &vocab),
            table_name: format!("T{}", i % 60),
            inference_type: types[i % 3],
        })
        .collect();
    let kb = FactKb::from_facts(kb).unwrap();

    // Explanations reuse a pool of "core" facts so unification has signal.
    let core: Vec<usize> = (0..facts / 8).map(|_| rng.gen_range(0..facts)).collect();
    let roles = [Role::Central, Role::Grounding, Role::LexicalGlue];
    let make = |prefix: &str, n: usize, split: Split, rng: &mut ChaCha8Rng| -> Vec<Question> {
        (0..n)
            .map(|i| {
                let len = rng.gen_range(1..12);
                let mut picked: Vec<usize> = Vec::new();
                while picked.len() < len {
                    let f = if rng.gen_bool(0.6) { *core.choose(rng).unwrap() } else { rng.gen_range(0..facts) };
                    if !picked.contains(&f) {
                        picked.push(f);
                    }
                }
                let facts_text: Vec<&str> = picked.iter().take(2).map(|&f| kb.facts()[f].text.as_str()).collect();
                let stem = format!("{} {}", facts_text.join(" "), sentence(rng, &vocab));
                let choices = ["A", "B", "C", "D"]
                    .iter()
                    .map(|l| Choice { label: l.to_string(), text: sentence(rng, &vocab) })
                    .collect();
                let entries = picked.iter().enumerate().map(|(j, &f)| ExplanationEntry {
                    uid: kb.facts()[f].uid.clone(),
                    role: roles[j % 3],
                });
                Question {
                    qid: format!("{prefix}{i:05}"),
                    stem,
                    choices,
                    answer_key: "A".into(),
                    split,
                    explanation: Some(Explanation::from_entries(entries).0),
                }
            })
            .collect()
    };
    let train_q = make("TR", train, Split::Train, &mut rng);
    let dev_q = make("DV", dev, Split::Dev, &mut rng);
    Synthetic { facts: kb, train: train_q, dev: dev_q }
}

/// Gold uid sets keyed by qid.
pub fn gold_by_qid(questions: &[Question]) -> BTreeMap<String, Vec<String>> {
    questions
        .iter()
        .filter_map(|q| q.explanation.as_ref().map(|e| (q.qid.clone(), e.uids().map(str::to_string).collect())))
        .collect()
}
