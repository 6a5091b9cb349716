// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::post_json;
use crate::perturb::HallucinationLexicon;
use crate::vlm::default_objects;

pub const JUDGE_MIN: f64 = 0.0;
pub const JUDGE_MAX: f64 = 6.0;

/// Wire body of a judge request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeQuery {
    pub question: String,
    pub response: String,
    pub reference: String,
    pub category: String,
}

#[derive(Deserialize)]
struct JudgeReply {
    score: f64,
}

fn check_range(score: f64) -> Result<f64> {
    if (JUDGE_MIN..=JUDGE_MAX).contains(&score) {
        Ok(score)
    } else {
        Err(Error::Range {
            value: score,
            min: JUDGE_MIN,
            max: JUDGE_MAX,
        })
    }
}

/// POSTs one query and returns its score.
pub fn judge_request(endpoint: &str, query: &JudgeQuery, timeout: Duration) -> Result<f64> {
    let reply: JudgeReply = post_json(endpoint, query, timeout)?;
    check_range(reply.score)
}

/// Keyword judge: 0 if the response names a hallucination object the
/// reference does not, 6 if it names every object in the reference, 3
/// otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct StubJudge {
    objects: BTreeSet<String>,
    hallucination_words: BTreeSet<String>,
}

impl Default for StubJudge {
    fn default() -> Self {
        Self::new(&HallucinationLexicon::default())
    }
}

fn words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_ascii_lowercase)
        .collect()
}

impl StubJudge {
    pub fn new(lexicon: &HallucinationLexicon) -> Self {
        Self {
            objects: default_objects().iter().map(|s| s.to_string()).collect(),
            hallucination_words: lexicon.injected_objects().into_iter().collect(),
        }
    }

    pub fn score(&self, query: &JudgeQuery) -> f64 {
        let response = words(&query.response);
        let reference = words(&query.reference);
        let phantom = response
            .iter()
            .any(|w| self.hallucination_words.contains(w) && !reference.contains(w));
        if phantom {
            return 0.0;
        }
        let covered = reference
            .iter()
            .filter(|w| self.objects.contains(*w))
            .all(|w| response.contains(w));
        if covered {
            6.0
        } else {
            3.0
        }
    }
}

#[derive(Debug, Clone)]
pub enum Judge {
    Remote { endpoint: String, timeout: Duration },
    Stub(StubJudge),
}

impl Judge {
    pub fn score(&self, query: &JudgeQuery) -> Result<f64> {
        match self {
            Judge::Remote { endpoint, timeout } => judge_request(endpoint, query, *timeout),
            Judge::Stub(stub) => Ok(stub.score(query)),
        }
    }

    /// Scores all queries concurrently; results keep input order.
    pub fn score_all(&self, queries: &[JudgeQuery]) -> Result<Vec<f64>> {
        queries.par_iter().map(|q| self.score(q)).collect()
    }
}
