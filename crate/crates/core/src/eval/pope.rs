// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::XorShift64Star;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: String,
    #[serde(rename = "present")]
    pub present_objects: BTreeSet<String>,
}

impl AnnotationRecord {
    pub fn validate(&self, vocab: &[String]) -> Result<()> {
        if self.present_objects.is_empty() {
            return Err(Error::Invariant(format!("image {} has no present objects", self.image_id)));
        }
        if let Some(o) = self.present_objects.iter().find(|o| !vocab.contains(o)) {
            return Err(Error::Invariant(format!("image {}: object {o:?} not in vocab", self.image_id)));
        }
        Ok(())
    }
}

/// Object frequency and pairwise co-occurrence over an annotation corpus.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusStats {
    /// Candidate objects for negative questions.
    pub objects: BTreeSet<String>,
    /// Number of images each object appears in.
    pub frequency: BTreeMap<String, usize>,
    /// Symmetric; keyed with the lexicographically smaller object first.
    pub cooccurrence: BTreeMap<(String, String), usize>,
}

impl CorpusStats {
    pub fn from_annotations(records: &[AnnotationRecord]) -> Self {
        let mut stats = Self::default();
        for r in records {
            for o in &r.present_objects {
                stats.objects.insert(o.clone());
                *stats.frequency.entry(o.clone()).or_default() += 1;
            }
            for (i, a) in r.present_objects.iter().enumerate() {
                for b in r.present_objects.iter().skip(i + 1) {
                    *stats.cooccurrence.entry((a.clone(), b.clone())).or_default() += 1;
                }
            }
        }
        stats
    }

    /// Adds objects that never appear in the corpus to the candidate pool.
    pub fn with_objects<I: IntoIterator<Item = String>>(mut self, extra: I) -> Self {
        self.objects.extend(extra);
        self
    }

    pub fn frequency(&self, object: &str) -> usize {
        self.frequency.get(object).copied().unwrap_or(0)
    }

    pub fn cooccurrence(&self, a: &str, b: &str) -> usize {
        let key = if a <= b { (a.to_string(), b.to_string()) } else { (b.to_string(), a.to_string()) };
        self.cooccurrence.get(&key).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Random,
    Popular,
    Adversarial,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Random => "random",
            Strategy::Popular => "popular",
            Strategy::Adversarial => "adversarial",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Strategy::Random),
            "popular" => Ok(Strategy::Popular),
            "adversarial" => Ok(Strategy::Adversarial),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Yes,
    No,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopeQuestion {
    pub question_id: String,
    pub image_id: String,
    pub object: String,
    pub label: Label,
    pub strategy: Strategy,
}

impl PopeQuestion {
    pub fn prompt(&self) -> String {
        format!("is there a {} in the image ?", self.object)
    }
}

fn top_k_by<F: Fn(&str) -> usize>(candidates: &[&String], k: usize, score: F) -> Vec<String> {
    let mut ranked: Vec<(usize, &String)> = candidates.iter().map(|c| (score(c), *c)).collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    ranked.into_iter().take(k).map(|(_, c)| c.clone()).collect()
}

fn sample_k(candidates: &[&String], k: usize, rng: &mut XorShift64Star) -> Vec<String> {
    rng.choose_indices(candidates.len(), k).into_iter().map(|i| candidates[i].clone()).collect()
}

/// Per image: `k` yes-questions drawn from the present objects, then `k`
/// no-questions chosen among absent objects by `strategy`.
pub fn build_pope_questions(
    annotations: &[AnnotationRecord],
    stats: &CorpusStats,
    strategy: Strategy,
    k: usize,
    seed: u64,
) -> Result<Vec<PopeQuestion>> {
    if k == 0 {
        return Err(Error::Config("k_per_image must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(annotations.len() * 2 * k);
    for (i, record) in annotations.iter().enumerate() {
        let present: Vec<&String> = record.present_objects.iter().collect();
        let absent: Vec<&String> = stats.objects.iter().filter(|o| !record.present_objects.contains(*o)).collect();
        for (kind, available) in [("present", present.len()), ("absent", absent.len())] {
            if available < k {
                return Err(Error::InsufficientObjects {
                    image_id: record.image_id.clone(),
                    kind,
                    available,
                    needed: k,
                });
            }
        }
        let mut rng = XorShift64Star::derived(seed, i as u64);
        let yes = sample_k(&present, k, &mut rng);
        let no = match strategy {
            Strategy::Random => sample_k(&absent, k, &mut rng),
            Strategy::Popular => top_k_by(&absent, k, |o| stats.frequency(o)),
            Strategy::Adversarial => top_k_by(&absent, k, |o| {
                present.iter().map(|p| stats.cooccurrence(o, p)).sum()
            }),
        };
        let labelled = yes.into_iter().map(|o| (o, Label::Yes)).chain(no.into_iter().map(|o| (o, Label::No)));
        for (j, (object, label)) in labelled.enumerate() {
            out.push(PopeQuestion {
                question_id: format!("{}:{strategy}:{j}", record.image_id),
                image_id: record.image_id.clone(),
                object,
                label,
                strategy,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Yes,
    No,
    Unparseable,
}

/// Looks for "yes"/"no" tokens in the first sentence, case-insensitively.
/// Both or neither gives [`Answer::Unparseable`].
pub fn parse_yes_no(response: &str) -> Answer {
    let first = response.split(['.', '!', '?', '\n']).find(|s| !s.trim().is_empty()).unwrap_or("");
    let mut yes = false;
    let mut no = false;
    for tok in first.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        match tok.to_ascii_lowercase().as_str() {
            "yes" => yes = true,
            "no" => no = true,
            _ => {}
        }
    }
    match (yes, no) {
        (true, false) => Answer::Yes,
        (false, true) => Answer::No,
        _ => Answer::Unparseable,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub unparseable: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize, unparseable: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        // harmonic mean of precision and recall, in count form
        let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
        Self {
            tp,
            fp,
            fn_,
            tn,
            accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
            precision,
            recall,
            f1,
            unparseable,
        }
    }
}

/// "yes" is the positive class. An unparseable answer counts as the wrong
/// label.
pub fn score_pope(predictions: &[String], questions: &[PopeQuestion]) -> Result<Metrics> {
    if predictions.len() != questions.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: questions.len(),
        });
    }
    let (mut tp, mut fp, mut fn_, mut tn, mut unparseable) = (0, 0, 0, 0, 0);
    for (p, q) in predictions.iter().zip(questions) {
        let answer = parse_yes_no(p);
        if answer == Answer::Unparseable {
            unparseable += 1;
        }
        match (q.label, answer) {
            (Label::Yes, Answer::Yes) => tp += 1,
            (Label::Yes, _) => fn_ += 1,
            (Label::No, Answer::No) => tn += 1,
            (Label::No, _) => fp += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, fn_, tn, unparseable))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub question_id: String,
    pub answer: String,
}

/// Orders predictions to match `questions` by `question_id`.
pub fn align_predictions(predictions: &[Prediction], questions: &[PopeQuestion]) -> Result<Vec<String>> {
    if predictions.len() != questions.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: questions.len(),
        });
    }
    let mut by_id: BTreeMap<&str, &str> = BTreeMap::new();
    for p in predictions {
        if by_id.insert(&p.question_id, &p.answer).is_some() {
            return Err(Error::Format(format!("duplicate prediction for {}", p.question_id)));
        }
    }
    questions
        .iter()
        .map(|q| {
            by_id
                .get(q.question_id.as_str())
                .map(|a| a.to_string())
                .ok_or_else(|| Error::Format(format!("no prediction for {}", q.question_id)))
        })
        .collect()
}
