//! Seeded generator for review-shaped corpora with known structure.
//!
//! Rationale sentences carry sentiment words of the document's label;
//! other sentences are neutral filler that occasionally contains a
//! sentiment word of random polarity, always right after a hedge such as
//! "although", so whether a sentence is a rationale can be read off the
//! sentence itself. Used for fixtures, demos and the
//! desk-scale pipeline runs when the real corpus is not available.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Document, Label};

const POSITIVE: &[&str] = &[
    "good",
    "great",
    "wonderful",
    "superb",
    "brilliant",
    "moving",
    "exquisite",
    "delightful",
    "outstanding",
    "charming",
    "gripping",
    "stunning",
];
const HEDGES: &[&str] = &["although", "despite", "admittedly", "granted"];
const NEGATIVE: &[&str] = &[
    "bad",
    "awful",
    "dull",
    "boring",
    "terrible",
    "flat",
    "tedious",
    "weak",
    "clumsy",
    "lifeless",
    "pointless",
    "dreadful",
];
const NEUTRAL: &[&str] = &[
    "the", "film", "story", "director", "camera", "scene", "city", "house", "brother", "sister",
    "night", "town", "police", "school", "car", "money", "year", "wife", "husband", "friend",
    "war", "ship", "island", "doctor", "train", "letter", "dinner", "party", "music", "street",
    "then", "after", "while", "when", "where", "with", "into", "from", "about", "over", "meets",
    "returns", "leaves", "finds", "tells", "takes", "watches", "opens", "plays", "writes", "a",
    "his", "her", "their", "old", "young", "new", "small", "second", "last",
];

#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    pub documents: usize,
    /// The first `annotated` documents carry rationale flags.
    pub annotated: usize,
    pub mean_sentences: usize,
    /// Expected share of sentences in a document that are rationales.
    pub rationale_fraction: f64,
    /// Probability that a non-rationale sentence contains one sentiment
    /// word of random polarity.
    pub distractor_rate: f64,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            documents: 100,
            annotated: 90,
            mean_sentences: 32,
            rationale_fraction: 0.25,
            distractor_rate: 0.3,
            min_tokens: 6,
            max_tokens: 16,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    /// Same proportions as the annotated movie-review corpus: 2,000
    /// balanced reviews of which 1,800 are annotated.
    pub fn review_shaped(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            documents: 2000,
            annotated: 1800,
            seed,
            ..SyntheticSpec::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub documents: Vec<Document>,
}

impl SyntheticCorpus {
    pub fn generate(spec: &SyntheticSpec) -> SyntheticCorpus {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let documents = (0..spec.documents)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Pos } else { Label::Neg };
                generate_document(
                    &mut rng,
                    spec,
                    format!("syn{i:05}"),
                    label,
                    i < spec.annotated,
                )
            })
            .collect();
        SyntheticCorpus { documents }
    }
}

fn generate_document(
    rng: &mut ChaCha8Rng,
    spec: &SyntheticSpec,
    id: String,
    label: Label,
    annotated: bool,
) -> Document {
    let lo = (spec.mean_sentences / 2).max(1);
    let hi = (spec.mean_sentences * 3 / 2).max(lo);
    let n = rng.gen_range(lo..=hi);
    let mut flags: Vec<bool> = (0..n)
        .map(|_| rng.gen_bool(spec.rationale_fraction))
        .collect();
    if !flags.contains(&true) {
        let k = rng.gen_range(0..n);
        flags[k] = true;
    }
    let own = match label {
        Label::Pos => POSITIVE,
        Label::Neg => NEGATIVE,
    };

    let sentences: Vec<(String, Option<bool>)> = flags
        .iter()
        .map(|&is_rationale| {
            let len = rng.gen_range(spec.min_tokens..=spec.max_tokens.max(spec.min_tokens));
            let mut words: Vec<&str> = (0..len).map(|_| *NEUTRAL.choose(rng).unwrap()).collect();
            let sentiment: Vec<Vec<&str>> = if is_rationale {
                (0..rng.gen_range(1..=2))
                    .map(|_| vec![*own.choose(rng).unwrap()])
                    .collect()
            } else if rng.gen_bool(spec.distractor_rate) {
                let pool = if rng.gen_bool(0.5) {
                    POSITIVE
                } else {
                    NEGATIVE
                };
                vec![vec![*HEDGES.choose(rng).unwrap(), *pool.choose(rng).unwrap()]]
            } else {
                Vec::new()
            };
            for phrase in sentiment {
                let at = rng.gen_range(0..=words.len());
                words.splice(at..at, phrase);
            }
            let text = format!("{} .", words.join(" "));
            (text, annotated.then_some(is_rationale))
        })
        .collect();

    Document::new(id, label, sentences).expect("generated sentences are never empty")
}

/// Words that mark positive sentiment in generated documents.
pub fn positive_words() -> &'static [&'static str] {
    POSITIVE
}

/// Words that mark negative sentiment in generated documents.
pub fn negative_words() -> &'static [&'static str] {
    NEGATIVE
}
