use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Choice, Judgment};

/// Trusted judgments collected before a tie-break is requested.
pub const JUDGES_PER_HIT: usize = 3;
/// Trusted judgments after which a hit is closed either way.
pub const MAX_JUDGES_PER_HIT: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerRecord {
    pub worker_id: String,
    /// Pass/fail of each gold question answered.
    pub gold_outcomes: Vec<bool>,
    pub trusted: bool,
}

impl WorkerRecord {
    pub fn new(worker_id: impl Into<String>) -> WorkerRecord {
        WorkerRecord {
            worker_id: worker_id.into(),
            gold_outcomes: Vec::new(),
            trusted: true,
        }
    }

    pub fn record_gold(&mut self, passed: bool) {
        self.gold_outcomes.push(passed);
        self.trusted = self.gold_outcomes.iter().all(|&p| p);
    }

    pub fn passed_gold(&self) -> bool {
        !self.gold_outcomes.is_empty() && self.trusted
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Resolved(Choice),
    /// Fewer than two trusted votes so far.
    Pending,
    /// Trusted votes disagree and another trusted judge is needed.
    NeedsFourth,
    /// Still no clear majority after the tie-break judge.
    Unresolved,
}

impl Resolution {
    pub fn is_final(self) -> bool {
        matches!(self, Resolution::Resolved(_) | Resolution::Unresolved)
    }
}

/// Resolves the trusted votes on one hit. A choice wins when it has at
/// least two votes and more than any other choice.
pub fn resolve_votes(trusted: &[Choice]) -> Resolution {
    let mut counts = [0usize; 3];
    for c in trusted {
        counts[*c as usize] += 1;
    }
    let top = *counts.iter().max().unwrap();
    if top >= 2 && counts.iter().filter(|&&c| c == top).count() == 1 {
        let winner = Choice::ALL[counts.iter().position(|&c| c == top).unwrap()];
        return Resolution::Resolved(winner);
    }
    match trusted.len() {
        0 | 1 => Resolution::Pending,
        n if n < MAX_JUDGES_PER_HIT => Resolution::NeedsFourth,
        _ => Resolution::Unresolved,
    }
}

/// Majority vote over one hit's judgments counting only trusted workers.
/// Workers without a record have not passed gold and do not count.
pub fn majority_vote(
    judgments: &[Judgment],
    workers: &BTreeMap<String, WorkerRecord>,
) -> Resolution {
    let trusted: Vec<Choice> = judgments
        .iter()
        .filter(|j| workers.get(&j.worker_id).is_some_and(|w| w.trusted))
        .map(|j| j.choice)
        .collect();
    resolve_votes(&trusted)
}
