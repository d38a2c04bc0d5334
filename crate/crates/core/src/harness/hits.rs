use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Label};
use crate::explain::{Explanation, RANDOM_TAG};
use crate::models::ModelKind;
use crate::{jsonl, Error, Result};

/// Where a highlighted sentence set came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceTag {
    #[serde(rename = "RA")]
    Ra,
    #[serde(rename = "AT")]
    At,
    Random,
    GoldRationale,
}

impl SourceTag {
    /// Maps an explanation's model tag to its source.
    pub fn from_model_tag(tag: &str) -> Result<SourceTag> {
        match tag {
            RANDOM_TAG => Ok(SourceTag::Random),
            _ => match tag.parse::<ModelKind>() {
                Ok(ModelKind::RaCnn) => Ok(SourceTag::Ra),
                Ok(ModelKind::AtCnn) => Ok(SourceTag::At),
                _ => Err(Error::Invalid(format!(
                    "`{tag}` explanations cannot be compared"
                ))),
            },
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SourceTag::Ra => "RA",
            SourceTag::At => "AT",
            SourceTag::Random => "Random",
            SourceTag::GoldRationale => "GoldRationale",
        }
    }

    /// Column heading used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            SourceTag::Ra => "RA-CNN",
            SourceTag::At => "AT-CNN",
            SourceTag::Random => "Random",
            SourceTag::GoldRationale => "Human",
        }
    }
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<SourceTag> {
        match s {
            "RA" => Ok(SourceTag::Ra),
            "AT" => Ok(SourceTag::At),
            "Random" => Ok(SourceTag::Random),
            "GoldRationale" => Ok(SourceTag::GoldRationale),
            _ => SourceTag::from_model_tag(s),
        }
    }
}

/// An answer in terms of the underlying variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
    #[serde(rename = "EQUAL")]
    Equal,
}

impl Choice {
    pub const ALL: [Choice; 3] = [Choice::A, Choice::B, Choice::Equal];
}

/// An answer in terms of what the worker saw.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DisplayChoice {
    Left,
    Right,
    Equal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub source: SourceTag,
    pub indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hit {
    pub hit_id: String,
    pub doc_id: String,
    pub doc_label: Label,
    pub variant_a: Variant,
    pub variant_b: Variant,
    /// Even: variant A renders on the left.
    pub order_seed: u64,
    pub is_gold: bool,
    pub gold_expected: Option<Choice>,
    pub sentences: Vec<String>,
}

impl Hit {
    pub fn left_is_a(&self) -> bool {
        self.order_seed.is_multiple_of(2)
    }

    pub fn left(&self) -> &Variant {
        if self.left_is_a() {
            &self.variant_a
        } else {
            &self.variant_b
        }
    }

    pub fn right(&self) -> &Variant {
        if self.left_is_a() {
            &self.variant_b
        } else {
            &self.variant_a
        }
    }

    pub fn underlying(&self, shown: DisplayChoice) -> Choice {
        match (shown, self.left_is_a()) {
            (DisplayChoice::Equal, _) => Choice::Equal,
            (DisplayChoice::Left, true) | (DisplayChoice::Right, false) => Choice::A,
            (DisplayChoice::Left, false) | (DisplayChoice::Right, true) => Choice::B,
        }
    }

    pub fn displayed(&self, choice: Choice) -> DisplayChoice {
        match (choice, self.left_is_a()) {
            (Choice::Equal, _) => DisplayChoice::Equal,
            (Choice::A, true) | (Choice::B, false) => DisplayChoice::Left,
            (Choice::A, false) | (Choice::B, true) => DisplayChoice::Right,
        }
    }

    /// Pair of sources compared by this hit, in A/B order.
    pub fn comparison(&self) -> (SourceTag, SourceTag) {
        (self.variant_a.source, self.variant_b.source)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("hit `{}`: {m}", self.hit_id)));
        if self.variant_a.source == self.variant_b.source {
            return bad("both variants come from the same source");
        }
        if self.is_gold != self.gold_expected.is_some() {
            return bad("gold flag and expected answer disagree");
        }
        for v in [&self.variant_a, &self.variant_b] {
            let distinct: HashSet<_> = v.indices.iter().collect();
            if distinct.len() != v.indices.len()
                || v.indices.iter().any(|&i| i >= self.sentences.len())
            {
                return bad("variant indices are repeated or out of range");
            }
        }
        Ok(())
    }

    /// What the judge sees: both copies of the document with highlights,
    /// in display order, and nothing about where they came from.
    pub fn view(&self) -> HitView {
        let side = |v: &Variant| SideView {
            sentences: self
                .sentences
                .iter()
                .enumerate()
                .map(|(index, text)| SentenceView {
                    index,
                    text: text.clone(),
                    highlight: v.indices.contains(&index),
                })
                .collect(),
        };
        HitView {
            hit_id: self.hit_id.clone(),
            doc_label: self.doc_label,
            left: side(self.left()),
            right: side(self.right()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceView {
    pub index: usize,
    pub text: String,
    pub highlight: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideView {
    pub sentences: Vec<SentenceView>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitView {
    pub hit_id: String,
    pub doc_label: Label,
    pub left: SideView,
    pub right: SideView,
}

fn hit_prefix(a: SourceTag, b: SourceTag) -> String {
    format!(
        "{}-{}",
        a.as_str().to_lowercase(),
        b.as_str().to_lowercase()
    )
}

/// One paired-comparison hit per document, A from `expls_a` and B from
/// `expls_b`. The displayed label is the document's gold label, which the
/// both-correct filter makes equal to both models' prediction.
pub fn build_hits(
    docs: &[&Document],
    expls_a: &[Explanation],
    expls_b: &[Explanation],
    seed: u64,
) -> Result<Vec<Hit>> {
    let index = |expls: &[Explanation]| -> HashMap<String, usize> {
        expls
            .iter()
            .enumerate()
            .map(|(i, e)| (e.doc_id.clone(), i))
            .collect()
    };
    let (ia, ib) = (index(expls_a), index(expls_b));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = Vec::with_capacity(docs.len());
    for (n, doc) in docs.iter().enumerate() {
        let find = |idx: &HashMap<String, usize>, expls: &[Explanation], side: &str| {
            idx.get(&doc.id).map(|&i| expls[i].clone()).ok_or_else(|| {
                Error::Invalid(format!("no {side} explanation for document `{}`", doc.id))
            })
        };
        let ea = find(&ia, expls_a, "first")?;
        let eb = find(&ib, expls_b, "second")?;
        let (sa, sb) = (
            SourceTag::from_model_tag(&ea.model)?,
            SourceTag::from_model_tag(&eb.model)?,
        );
        let hit = Hit {
            hit_id: format!("{}-{n:04}", hit_prefix(sa, sb)),
            doc_id: doc.id.clone(),
            doc_label: doc.label,
            variant_a: Variant {
                source: sa,
                indices: ea.indices(),
            },
            variant_b: Variant {
                source: sb,
                indices: eb.indices(),
            },
            order_seed: rng.gen(),
            is_gold: false,
            gold_expected: None,
            sentences: doc.sentences.iter().map(|s| s.text.clone()).collect(),
        };
        hit.validate()?;
        hits.push(hit);
    }
    Ok(hits)
}

/// Sentences on each side of a gold question.
pub const GOLD_SENTENCES: usize = 3;

/// Gold questions: three human rationale sentences against three random
/// non-rationale sentences; the rationale side (A) is the expected answer.
/// Documents are visited in seeded order and those without enough of
/// either kind are skipped.
pub fn build_gold_hits(docs: &[&Document], seed: u64, count: usize) -> Result<Vec<Hit>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<&Document> = docs.to_vec();
    order.shuffle(&mut rng);
    let mut hits = Vec::with_capacity(count);
    for doc in order {
        if hits.len() == count {
            break;
        }
        let rationale = doc.rationale_indices();
        let other: Vec<usize> = (0..doc.len()).filter(|i| !rationale.contains(i)).collect();
        if !doc.annotated || rationale.len() < GOLD_SENTENCES || other.len() < GOLD_SENTENCES {
            continue;
        }
        let pick = |pool: &[usize], rng: &mut ChaCha8Rng| {
            let mut v: Vec<usize> = pool.choose_multiple(rng, GOLD_SENTENCES).copied().collect();
            v.sort_unstable();
            v
        };
        let a = pick(&rationale, &mut rng);
        let b = pick(&other, &mut rng);
        hits.push(Hit {
            hit_id: format!("gold-{:04}", hits.len()),
            doc_id: doc.id.clone(),
            doc_label: doc.label,
            variant_a: Variant {
                source: SourceTag::GoldRationale,
                indices: a,
            },
            variant_b: Variant {
                source: SourceTag::Random,
                indices: b,
            },
            order_seed: rng.gen(),
            is_gold: true,
            gold_expected: Some(Choice::A),
            sentences: doc.sentences.iter().map(|s| s.text.clone()).collect(),
        });
    }
    if hits.len() < count {
        return Err(Error::Invalid(format!(
            "only {} documents qualify for gold questions, {count} requested",
            hits.len()
        )));
    }
    Ok(hits)
}

/// Replaces the descriptive ids with `hit-NNNNN` numbered in a seeded
/// random order, so an id says nothing about the comparison or whether
/// the hit is a gold question.
pub fn anonymize_ids(hits: &mut [Hit], seed: u64) {
    let mut numbers: Vec<usize> = (0..hits.len()).collect();
    numbers.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for (h, n) in hits.iter_mut().zip(numbers) {
        h.hit_id = format!("hit-{n:05}");
    }
}

pub fn load_hits(path: impl AsRef<Path>) -> Result<Vec<Hit>> {
    let hits: Vec<Hit> = jsonl::load_records(path)?;
    let mut seen = HashSet::new();
    for h in &hits {
        h.validate()?;
        if !seen.insert(h.hit_id.as_str()) {
            return Err(Error::Invalid(format!(
                "hit id `{}` listed twice",
                h.hit_id
            )));
        }
    }
    Ok(hits)
}

pub fn save_hits(hits: &[Hit], path: impl AsRef<Path>) -> Result<()> {
    jsonl::save_records(hits, path)
}
