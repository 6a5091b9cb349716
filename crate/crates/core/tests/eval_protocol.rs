// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use ndesteer::corpus::{object_list, synthetic_annotations};
use ndesteer::eval::*;
use ndesteer::XorShift64Star;
use proptest::prelude::*;
use ndesteer::eval::Strategy;

fn rec(id: &str, objs: &[&str]) -> AnnotationRecord {
    AnnotationRecord { image_id: id.into(), present_objects: objs.iter().map(|s| s.to_string()).collect() }
}

fn answers_for(m: (usize, usize, usize, usize)) -> (Vec<String>, Vec<PopeQuestion>) {
    let (tp, fp, fn_, tn) = m;
    let mut preds = Vec::new();
    let mut qs = Vec::new();
    let mut push = |label, answer: &str| {
        qs.push(PopeQuestion {
            question_id: format!("q{}", qs.len()),
            image_id: "i".into(),
            object: "dog".into(),
            label,
            strategy: Strategy::Random,
        });
        preds.push(answer.to_string());
    };
    (0..tp).for_each(|_| push(Label::Yes, "Yes."));
    (0..fn_).for_each(|_| push(Label::Yes, "No."));
    (0..fp).for_each(|_| push(Label::No, "yes"));
    (0..tn).for_each(|_| push(Label::No, "no"));
    (preds, qs)
}

#[test]
fn worked_confusion_examples() {
    let (p, q) = answers_for((40, 10, 10, 40));
    let m = score_pope(&p, &q).unwrap();
    assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (0.8, 0.8, 0.8, 0.8));
    let (p, q) = answers_for((30, 10, 20, 40));
    let m = score_pope(&p, &q).unwrap();
    assert_eq!((m.precision, m.recall), (0.75, 0.6));
    assert!((m.f1 - 0.6666667).abs() < 1e-6);
    let (p, q) = answers_for((7, 0, 0, 7));
    let m = score_pope(&p, &q).unwrap();
    assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
}

#[test]
fn popular_and_adversarial_examples() {
    let corpus = vec![
        rec("x", &["knife", "cup"]),
        rec("a", &["table", "fork", "knife"]),
        rec("b", &["table", "fork", "knife"]),
        rec("c", &["table", "dog"]),
        rec("d", &["table", "cat"]),
    ];
    let stats = CorpusStats::from_annotations(&corpus);
    let pop = build_pope_questions(&corpus[..1], &stats, Strategy::Popular, 1, 0).unwrap();
    assert_eq!(pop[1].object, "table");
    let adv = build_pope_questions(&corpus[..1], &stats, Strategy::Adversarial, 1, 0).unwrap();
    assert_eq!(adv[1].object, "fork");
}

/// Brute-force recount of the sampler choices from raw annotations.
#[test]
fn samplers_match_brute_force() {
    let objects = object_list();
    for seed in 0..20u64 {
        let corpus = synthetic_annotations(30, &objects[..15], 2, 5, seed).unwrap();
        let stats = CorpusStats::from_annotations(&corpus);
        for strategy in [Strategy::Popular, Strategy::Adversarial] {
            let qs = build_pope_questions(&corpus, &stats, strategy, 2, seed).unwrap();
            for r in &corpus {
                let score = |o: &str| -> usize {
                    corpus
                        .iter()
                        .filter(|c| c.present_objects.contains(o))
                        .map(|c| match strategy {
                            Strategy::Popular => 1,
                            _ => r.present_objects.iter().filter(|p| c.present_objects.contains(*p)).count(),
                        })
                        .sum()
                };
                let mut absent: Vec<&String> = stats.objects.iter().filter(|o| !r.present_objects.contains(*o)).collect();
                absent.sort_by(|a, b| score(b).cmp(&score(a)).then(a.cmp(b)));
                let chosen: Vec<&str> = qs
                    .iter()
                    .filter(|q| q.image_id == r.image_id && q.label == Label::No)
                    .map(|q| q.object.as_str())
                    .collect();
                assert_eq!(chosen, vec![absent[0].as_str(), absent[1].as_str()], "seed {seed} {strategy}");
            }
        }
    }
}

#[test]
fn mmhal_matches_brute_force_means() {
    let mut rng = XorShift64Star::new(8);
    for _ in 0..50 {
        let n = 1 + rng.below(40);
        let records: Vec<MmhalRecord> = (0..n)
            .map(|i| MmhalRecord {
                question_id: format!("q{i}"),
                category: MmhalCategory::ALL[rng.below(8)],
                score: (rng.next_f64() * 6.0 * 4.0).round() / 4.0,
            })
            .collect();
        let s = aggregate_mmhal(&records, 3.0).unwrap();
        let overall = records.iter().map(|r| r.score).sum::<f64>() / n as f64;
        assert!((s.overall - overall).abs() < 1e-9);
        let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for r in &records {
            groups.entry(r.category.name()).or_default().push(r.score);
        }
        for (c, xs) in groups {
            assert!((s.per_category[c] - xs.iter().sum::<f64>() / xs.len() as f64).abs() < 1e-9);
        }
        let rate = records.iter().filter(|r| r.score < 3.0).count() as f64 / n as f64;
        assert!((s.hallucination_rate - rate).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn question_sets_are_balanced_and_deterministic(seed in any::<u64>(), k in 1usize..3, which in 0usize..3) {
        let strategy = [Strategy::Random, Strategy::Popular, Strategy::Adversarial][which];
        let corpus = synthetic_annotations(12, &object_list(), 3, 5, seed).unwrap();
        let stats = CorpusStats::from_annotations(&corpus);
        let qs = build_pope_questions(&corpus, &stats, strategy, k, seed).unwrap();
        prop_assert_eq!(&qs, &build_pope_questions(&corpus, &stats, strategy, k, seed).unwrap());
        for r in &corpus {
            let mine: Vec<_> = qs.iter().filter(|q| q.image_id == r.image_id).collect();
            let yes = mine.iter().filter(|q| q.label == Label::Yes).count();
            prop_assert_eq!(yes, k);
            prop_assert_eq!(mine.len(), 2 * k);
            for q in mine {
                prop_assert_eq!(q.label == Label::Yes, r.present_objects.contains(&q.object));
            }
        }
    }

    #[test]
    fn metric_identities(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50, tn in 0usize..50) {
        let (p, q) = answers_for((tp, fp, fn_, tn));
        let m = score_pope(&p, &q).unwrap();
        prop_assert_eq!((m.tp, m.fp, m.fn_, m.tn), (tp, fp, fn_, tn));
        let total = tp + fp + fn_ + tn;
        if total > 0 {
            prop_assert!((m.accuracy - (tp + tn) as f64 / total as f64).abs() < 1e-12);
        }
        if m.precision + m.recall > 0.0 {
            prop_assert!((m.f1 - 2.0 * m.precision * m.recall / (m.precision + m.recall)).abs() < 1e-12);
        }
    }

    #[test]
    fn always_yes_on_balanced_sets(k in 1usize..40) {
        let (_, q) = answers_for((k, k, 0, 0));
        let preds = vec!["yes".to_string(); q.len()];
        let m = score_pope(&preds, &q).unwrap();
        prop_assert_eq!(m.recall, 1.0);
        prop_assert_eq!(m.precision, 0.5);
        prop_assert!((m.f1 - 2.0 / 3.0).abs() < 1e-9);
    }
}
