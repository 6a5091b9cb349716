// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::judge::{JUDGE_MAX, JUDGE_MIN};

pub const DEFAULT_HALLUCINATION_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmhalCategory {
    Attribute,
    Adversarial,
    Comparison,
    Counting,
    Relation,
    Environment,
    Holistic,
    Other,
}

impl MmhalCategory {
    pub const ALL: [MmhalCategory; 8] = [
        MmhalCategory::Attribute,
        MmhalCategory::Adversarial,
        MmhalCategory::Comparison,
        MmhalCategory::Counting,
        MmhalCategory::Relation,
        MmhalCategory::Environment,
        MmhalCategory::Holistic,
        MmhalCategory::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MmhalCategory::Attribute => "attribute",
            MmhalCategory::Adversarial => "adversarial",
            MmhalCategory::Comparison => "comparison",
            MmhalCategory::Counting => "counting",
            MmhalCategory::Relation => "relation",
            MmhalCategory::Environment => "environment",
            MmhalCategory::Holistic => "holistic",
            MmhalCategory::Other => "other",
        }
    }
}

impl fmt::Display for MmhalCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmhalRecord {
    pub question_id: String,
    pub category: MmhalCategory,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmhalSummary {
    /// Only categories with at least one record.
    pub per_category: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, usize>,
    pub missing_categories: Vec<String>,
    /// Mean over all records.
    pub overall: f64,
    pub hallucination_rate: f64,
    pub threshold: f64,
    pub n_records: usize,
}

/// Per-category and overall means; a record counts as a hallucination when
/// its score is below `threshold`.
pub fn aggregate_mmhal(records: &[MmhalRecord], threshold: f64) -> Result<MmhalSummary> {
    if records.is_empty() {
        return Err(Error::Config("no judge records to aggregate".into()));
    }
    let mut sums: BTreeMap<MmhalCategory, (f64, usize)> = BTreeMap::new();
    let mut total = 0.0;
    let mut hallucinated = 0usize;
    for r in records {
        if !(JUDGE_MIN..=JUDGE_MAX).contains(&r.score) {
            return Err(Error::Range {
                value: r.score,
                min: JUDGE_MIN,
                max: JUDGE_MAX,
            });
        }
        let e = sums.entry(r.category).or_default();
        e.0 += r.score;
        e.1 += 1;
        total += r.score;
        if r.score < threshold {
            hallucinated += 1;
        }
    }
    let missing_categories: Vec<String> = MmhalCategory::ALL
        .iter()
        .filter(|c| !sums.contains_key(c))
        .map(|c| c.name().to_string())
        .collect();
    for c in &missing_categories {
        log::warn!("category {c} has no records");
    }
    Ok(MmhalSummary {
        per_category: sums.iter().map(|(c, (s, n))| (c.name().to_string(), s / *n as f64)).collect(),
        counts: sums.iter().map(|(c, (_, n))| (c.name().to_string(), *n)).collect(),
        missing_categories,
        overall: total / records.len() as f64,
        hallucination_rate: hallucinated as f64 / records.len() as f64,
        threshold,
        n_records: records.len(),
    })
}
