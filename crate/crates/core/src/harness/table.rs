use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::vote::Resolution;
use super::{Choice, SourceTag};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub first: usize,
    pub second: usize,
    pub equal: usize,
}

impl OutcomeCounts {
    pub fn total(&self) -> usize {
        self.first + self.second + self.equal
    }
}

/// Outcome of one paired comparison. Percentages are over resolved hits
/// and rounded to two decimals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub first: SourceTag,
    pub second: SourceTag,
    pub first_better: f64,
    pub second_better: f64,
    pub equal: f64,
    pub counts: OutcomeCounts,
    pub unresolved: usize,
}

fn percent(count: usize, total: usize) -> f64 {
    (count as f64 * 10_000.0 / total as f64).round() / 100.0
}

/// Tabulates final votes for the comparison `first` (variant A) against
/// `second` (variant B). Votes still awaiting judges are an error.
pub fn tabulate(votes: &[Resolution], first: SourceTag, second: SourceTag) -> Result<ResultTable> {
    let mut counts = OutcomeCounts::default();
    let mut unresolved = 0;
    for v in votes {
        match v {
            Resolution::Resolved(Choice::A) => counts.first += 1,
            Resolution::Resolved(Choice::B) => counts.second += 1,
            Resolution::Resolved(Choice::Equal) => counts.equal += 1,
            Resolution::Unresolved => unresolved += 1,
            Resolution::Pending | Resolution::NeedsFourth => {
                return Err(Error::Invalid(
                    "cannot tabulate a vote that is still open".into(),
                ))
            }
        }
    }
    let total = counts.total();
    if total == 0 {
        return Err(Error::Invalid("no resolved votes to tabulate".into()));
    }
    Ok(ResultTable {
        first,
        second,
        first_better: percent(counts.first, total),
        second_better: percent(counts.second, total),
        equal: percent(counts.equal, total),
        counts,
        unresolved,
    })
}

impl ResultTable {
    pub fn resolved(&self) -> usize {
        self.counts.total()
    }

    /// Three-column layout: first model, second model, Equal.
    pub fn to_text(&self) -> String {
        let heads = [
            self.first.display_name(),
            self.second.display_name(),
            "Equal",
        ];
        let cells = [self.first_better, self.second_better, self.equal].map(|p| format!("{p:.2}%"));
        let widths: Vec<usize> = heads
            .iter()
            .zip(&cells)
            .map(|(h, c)| h.len().max(c.len()))
            .collect();
        let row = |items: [&str; 3]| {
            items
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!(" {s:^w$} "))
                .collect::<Vec<_>>()
                .join("|")
        };
        let mut out = String::new();
        let _ = writeln!(out, "{}", row(heads));
        let _ = writeln!(
            out,
            "{}",
            widths
                .iter()
                .map(|w| "-".repeat(w + 2))
                .collect::<Vec<_>>()
                .join("+")
        );
        let _ = writeln!(out, "{}", row([&cells[0], &cells[1], &cells[2]]));
        let _ = writeln!(
            out,
            "resolved {} (first {}, second {}, equal {}), unresolved {}",
            self.resolved(),
            self.counts.first,
            self.counts.second,
            self.counts.equal,
            self.unresolved
        );
        out
    }
}
