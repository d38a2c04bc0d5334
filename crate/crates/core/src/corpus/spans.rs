use crate::{Error, Result};

/// Reduces character-level rationale spans to one flag per sentence.
///
/// A sentence is a rationale when at least one annotated span shares at
/// least one character with it. All ranges are half-open `(start, end)`
/// character offsets into `doc_text`.
pub fn spans_to_sentence_labels(
    doc_text: &str,
    sentence_boundaries: &[(usize, usize)],
    rationale_spans: &[(usize, usize)],
) -> Result<Vec<bool>> {
    let len = doc_text.chars().count();
    let mut prev_end = 0;
    for (i, &(start, end)) in sentence_boundaries.iter().enumerate() {
        if start > end || end > len {
            return Err(Error::InvalidSpan(format!(
                "sentence {i} range {start}..{end} outside document of {len} characters"
            )));
        }
        if i > 0 && start < prev_end {
            return Err(Error::InvalidSpan(format!(
                "sentence {i} range {start}..{end} overlaps or precedes the previous sentence"
            )));
        }
        prev_end = end;
    }
    for &(start, end) in rationale_spans {
        if start > end || end > len {
            return Err(Error::InvalidSpan(format!(
                "rationale span {start}..{end} outside document of {len} characters"
            )));
        }
    }

    Ok(sentence_boundaries
        .iter()
        .map(|&(a, b)| rationale_spans.iter().any(|&(s, e)| s < b && a < e))
        .collect())
}
