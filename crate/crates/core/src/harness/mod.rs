//! Paired human evaluation of explanations: hit construction, gold
//! questions, routing, majority voting and result tables.

mod hits;
mod log;
mod study;
mod table;
mod vote;

use serde::{Deserialize, Serialize};

pub use hits::{
    anonymize_ids, build_gold_hits, build_hits, load_hits, save_hits, Choice, DisplayChoice, Hit,
    HitView, SentenceView, SideView, SourceTag, Variant, GOLD_SENTENCES,
};
pub use log::JudgmentLog;
pub use study::{Rejection, Study, UnknownWorker};
pub use table::{tabulate, OutcomeCounts, ResultTable};
pub use vote::{
    majority_vote, resolve_votes, Resolution, WorkerRecord, JUDGES_PER_HIT, MAX_JUDGES_PER_HIT,
};

/// One worker's answer on one hit, in underlying-variant terms.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub hit_id: String,
    pub worker_id: String,
    pub choice: Choice,
    /// Milliseconds since the Unix epoch when the service accepted it.
    pub ts: u64,
}

/// Current standing of one comparison in a study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub first: SourceTag,
    pub second: SourceTag,
    pub hits: usize,
    /// Hits still collecting judgments.
    pub open: usize,
    pub unresolved: usize,
    /// `None` until at least one hit is resolved.
    pub table: Option<ResultTable>,
}

pub fn summarize(study: &Study) -> Vec<ComparisonSummary> {
    let resolutions = study.resolutions();
    study
        .comparisons()
        .into_iter()
        .map(|(a, b)| {
            let all: Vec<Resolution> = resolutions
                .iter()
                .filter(|(h, _)| h.comparison() == (a, b))
                .map(|(_, r)| *r)
                .collect();
            let done: Vec<Resolution> = all.iter().copied().filter(|r| r.is_final()).collect();
            ComparisonSummary {
                first: a,
                second: b,
                hits: all.len(),
                open: all.len() - done.len(),
                unresolved: done
                    .iter()
                    .filter(|r| **r == Resolution::Unresolved)
                    .count(),
                table: tabulate(&done, a, b).ok(),
            }
        })
        .collect()
}
