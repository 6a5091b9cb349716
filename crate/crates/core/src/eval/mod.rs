// SPDX-License-Identifier: MIT OR Apache-2.0

//! Evaluation harness: balanced yes/no object probing, judge-score
//! aggregation and JSONL plumbing.

mod judge;
mod jsonl;
mod mmhal;
mod pope;

pub use judge::{judge_request, Judge, JudgeQuery, StubJudge, JUDGE_MAX, JUDGE_MIN};
pub use jsonl::{read_jsonl, write_jsonl};
pub use mmhal::{aggregate_mmhal, MmhalCategory, MmhalRecord, MmhalSummary, DEFAULT_HALLUCINATION_THRESHOLD};
pub use pope::{
    align_predictions, build_pope_questions, parse_yes_no, score_pope, AnnotationRecord, Answer, CorpusStats, Label,
    Metrics, PopeQuestion, Prediction, Strategy,
};
