//! Ranking metrics checked against brute-force walks over explicit
//! rankings, on instances of at most 50 facts.

use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use unirank::eval::{self, category_map, EvalReport, EvalSettings, GoldFact, GoldSet, QuestionRanks};
use unirank::text::OverlapBucket;
use unirank::{Hypothesis, InferenceType, Role};

/// AP by scanning the ranking top to bottom. Gold items not in `ranked`
/// are appended (in uid order) at the bottom of a `universe`-sized list.
fn ap_by_scan(ranked: &[String], relevant: &HashSet<String>, all_gold: &HashSet<String>, universe: usize) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let mut full: Vec<String> = ranked.to_vec();
    let mut missing: Vec<&String> = all_gold.iter().filter(|g| !ranked.contains(g)).collect();
    missing.sort();
    while full.len() + missing.len() < universe {
        full.push(format!("__filler{}", full.len()));
    }
    full.extend(missing.into_iter().cloned());
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, uid) in full.iter().enumerate() {
        if relevant.contains(uid) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / relevant.len() as f64)
}

fn precision_by_scan(ranked: &[String], gold: &HashSet<String>, k: usize) -> f64 {
    ranked.iter().take(k).filter(|u| gold.contains(*u)).count() as f64 / k as f64
}

#[derive(Debug, Clone)]
struct Instance {
    universe: usize,
    ranking: Vec<String>,
    gold: Vec<GoldFact>,
}

fn uid(i: usize) -> String {
    format!("f{i:02}")
}

fn instance() -> impl Strategy<Value = Instance> {
    instance_with(true)
}

fn full_instance() -> impl Strategy<Value = Instance> {
    instance_with(false)
}

fn instance_with(truncate: bool) -> impl Strategy<Value = Instance> {
    (2usize..=50)
        .prop_flat_map(move |n| {
            (
                Just(n),
                Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
                proptest::collection::btree_set(0..n, 1..=n.min(12)),
                proptest::collection::vec((0usize..3, 0usize..3, 0usize..3), 12),
                if truncate { (0..=n).boxed() } else { Just(n).boxed() },
            )
        })
        .prop_map(|(n, order, gold_idx, attrs, keep)| {
            let roles = [Role::Central, Role::Grounding, Role::LexicalGlue];
            let types = [InferenceType::Retrieval, InferenceType::InferenceSupporting, InferenceType::ComplexInference];
            let overlaps = [OverlapBucket::Zero, OverlapBucket::One, OverlapBucket::MoreThanOne];
            let gold = gold_idx
                .into_iter()
                .zip(attrs)
                .map(|(i, (r, t, o))| GoldFact { uid: uid(i), role: roles[r], inference_type: types[t], overlap: overlaps[o] })
                .collect();
            Instance { universe: n, ranking: order.into_iter().take(keep).map(uid).collect(), gold }
        })
}

fn gold_set(inst: &Instance, qid: &str) -> GoldSet {
    GoldSet {
        qid: qid.to_string(),
        hypothesis: Hypothesis { source_qid: qid.to_string(), text: String::new(), is_correct_candidate: true },
        facts: inst.gold.clone(),
    }
}

fn ranks_of(inst: &Instance, qid: &str) -> QuestionRanks {
    QuestionRanks::from_ranking(&gold_set(inst, qid), inst.ranking.iter().map(String::as_str), Some(inst.universe))
}

fn gold_uids(inst: &Instance) -> HashSet<String> {
    inst.gold.iter().map(|g| g.uid.clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn ap_matches_scan(inst in instance()) {
        let all = gold_uids(&inst);
        let expected = ap_by_scan(&inst.ranking, &all, &all, inst.universe).unwrap();
        prop_assert_eq!(ranks_of(&inst, "q").average_precision(), expected);
    }

    #[test]
    fn untruncated_ap_matches_plain_ap(inst in full_instance()) {
        let all = gold_uids(&inst);
        let gold: HashSet<&str> = all.iter().map(String::as_str).collect();
        let plain = eval::average_precision(inst.ranking.iter().map(String::as_str), &gold).unwrap();
        prop_assert_eq!(plain, ap_by_scan(&inst.ranking, &all, &all, inst.universe).unwrap());
    }

    #[test]
    fn precision_at_k_matches_scan(inst in full_instance(), k in 1usize..60) {
        let all = gold_uids(&inst);
        let gold: HashSet<&str> = all.iter().map(String::as_str).collect();
        let expected = precision_by_scan(&inst.ranking, &all, k);
        prop_assert_eq!(eval::precision_at_k(inst.ranking.iter().map(String::as_str), &gold, k), expected);
        prop_assert_eq!(ranks_of(&inst, "q").precision_at(k), expected);
    }

    #[test]
    fn restricted_ap_matches_scan(inst in instance(), bucket in 0usize..3) {
        let roles = [Role::Central, Role::Grounding, Role::LexicalGlue];
        let all = gold_uids(&inst);
        let relevant: HashSet<String> =
            inst.gold.iter().filter(|g| g.role == roles[bucket]).map(|g| g.uid.clone()).collect();
        let got = ranks_of(&inst, "q").restricted_average_precision(|g| g.role == roles[bucket]);
        prop_assert_eq!(got, ap_by_scan(&inst.ranking, &relevant, &all, inst.universe));
    }

    #[test]
    fn category_map_matches_scan(insts in proptest::collection::vec(instance(), 1..6)) {
        let questions: Vec<QuestionRanks> =
            insts.iter().enumerate().map(|(i, inst)| ranks_of(inst, &format!("q{i}"))).collect();
        let got = category_map(&questions, |g| Some(g.inference_type));

        let mut sums: BTreeMap<InferenceType, (f64, usize)> = BTreeMap::new();
        for inst in &insts {
            let all = gold_uids(inst);
            for t in InferenceType::KNOWN {
                let relevant: HashSet<String> =
                    inst.gold.iter().filter(|g| g.inference_type == t).map(|g| g.uid.clone()).collect();
                if let Some(ap) = ap_by_scan(&inst.ranking, &relevant, &all, inst.universe) {
                    let slot = sums.entry(t).or_insert((0.0, 0));
                    slot.0 += ap;
                    slot.1 += 1;
                }
            }
        }
        let expected: BTreeMap<InferenceType, f64> = sums.into_iter().map(|(t, (s, n))| (t, s / n as f64)).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn report_map_is_mean_of_scanned_aps(insts in proptest::collection::vec(instance(), 1..6)) {
        let questions: Vec<QuestionRanks> =
            insts.iter().enumerate().map(|(i, inst)| ranks_of(inst, &format!("q{i}"))).collect();
        let report = EvalReport::from_ranks("m", &questions, &EvalSettings::default()).unwrap();
        let aps: Vec<f64> = insts
            .iter()
            .map(|inst| {
                let all = gold_uids(inst);
                ap_by_scan(&inst.ranking, &all, &all, inst.universe).unwrap()
            })
            .collect();
        prop_assert_eq!(report.overall_map, aps.iter().sum::<f64>() / aps.len() as f64);
        for (row, k) in report.precision_at_k.iter().zip(EvalSettings::default().precision_ks) {
            prop_assert_eq!(row.k, k);
            let expected = questions.iter().map(|q| q.precision_at(k)).sum::<f64>() / questions.len() as f64;
            prop_assert_eq!(row.precision, expected);
        }
    }

    #[test]
    fn submission_scoring_matches_scan(inst in instance()) {
        let gold = gold_set(&inst, "q");
        let mut sub = BTreeMap::new();
        sub.insert("q".to_string(), inst.ranking.clone());
        let ranks = eval::score_submission(&sub, std::slice::from_ref(&gold), inst.universe);
        let all = gold_uids(&inst);
        prop_assert_eq!(ranks[0].average_precision(), ap_by_scan(&inst.ranking, &all, &all, inst.universe).unwrap());
        let listed: HashSet<&String> = inst.ranking.iter().collect();
        prop_assert_eq!(eval::truncation_misses(&sub, &[gold]), all.iter().filter(|g| !listed.contains(g)).count());
    }
}

#[test]
fn hand_computed_ap() {
    // gold at ranks 1, 3, 6 -> (1/1 + 2/3 + 3/6) / 3
    let ranking: Vec<String> = (0..6).map(uid).collect();
    let gold: HashSet<&str> = ["f00", "f02", "f05"].into_iter().collect();
    let ap = eval::average_precision(ranking.iter().map(String::as_str), &gold).unwrap();
    assert!((ap - (1.0 + 2.0 / 3.0 + 0.5) / 3.0).abs() < 1e-15);
}

#[test]
fn absent_question_gets_worst_ranks() {
    let inst = Instance {
        universe: 10,
        ranking: Vec::new(),
        gold: vec![GoldFact {
            uid: uid(3),
            role: Role::Central,
            inference_type: InferenceType::Retrieval,
            overlap: OverlapBucket::Zero,
        }],
    };
    let ranks = eval::score_submission(&BTreeMap::new(), &[gold_set(&inst, "q")], 10);
    assert_eq!(ranks[0].gold[0].1, 10);
    assert_eq!(ranks[0].average_precision(), 0.1);
}
