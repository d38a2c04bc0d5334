//! Sentence-level explanations: top-k extraction from model weights, the
//! random baseline, and overlap between two models' explanations.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::models::Prediction;
use crate::{jsonl, Error, Result};

pub const DEFAULT_K: usize = 3;

/// Model tag written for the random baseline.
pub const RANDOM_TAG: &str = "random";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedSentence {
    pub index: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub doc_id: String,
    pub model: String,
    pub k: usize,
    /// Highest weight first; equal weights keep the lower index first.
    #[serde(rename = "sentences")]
    pub ranked: Vec<RankedSentence>,
}

impl Explanation {
    pub fn indices(&self) -> Vec<usize> {
        self.ranked.iter().map(|r| r.index).collect()
    }

    pub fn top(&self) -> Option<usize> {
        self.ranked.first().map(|r| r.index)
    }

    /// Checks the ranking invariants against a document of `n` sentences.
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| {
            Err(Error::Invalid(format!(
                "explanation for `{}`: {m}",
                self.doc_id
            )))
        };
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.ranked.len() != self.k.min(n) {
            return bad(format!(
                "{} sentences ranked, expected {}",
                self.ranked.len(),
                self.k.min(n)
            ));
        }
        let mut seen = HashSet::new();
        for r in &self.ranked {
            if r.index >= n {
                return bad(format!(
                    "sentence index {} out of range for {n} sentences",
                    r.index
                ));
            }
            if !seen.insert(r.index) {
                return bad(format!("sentence index {} repeated", r.index));
            }
        }
        if self
            .ranked
            .windows(2)
            .any(|w| rank_order(&w[0], &w[1]).is_gt())
        {
            return bad("sentences are not in ranked order".into());
        }
        Ok(())
    }
}

fn rank_order(a: &RankedSentence, b: &RankedSentence) -> std::cmp::Ordering {
    b.weight.total_cmp(&a.weight).then(a.index.cmp(&b.index))
}

/// Ranks sentence weights and keeps the best `k` (all of them if fewer).
pub fn top_k(weights: &[f64], k: usize) -> Vec<RankedSentence> {
    let mut ranked: Vec<RankedSentence> = weights
        .iter()
        .enumerate()
        .map(|(index, &weight)| RankedSentence { index, weight })
        .collect();
    ranked.sort_by(rank_order);
    ranked.truncate(k);
    ranked
}

pub fn extract_top_k(prediction: &Prediction, k: usize, model: &str) -> Result<Explanation> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    Ok(Explanation {
        doc_id: prediction.doc_id.clone(),
        model: model.to_string(),
        k,
        ranked: top_k(&prediction.sentence_weights, k),
    })
}

/// Draws `min(k, n)` distinct sentences uniformly; every weight is 0.
pub fn random_explanation(doc: &Document, k: usize, seed: u64) -> Result<Explanation> {
    random_explanation_with(doc, k, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Random baseline for a whole document list from a single seeded stream.
pub fn random_explanations(docs: &[&Document], k: usize, seed: u64) -> Result<Vec<Explanation>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    docs.iter()
        .map(|d| random_explanation_with(d, k, &mut rng))
        .collect()
}

fn random_explanation_with(
    doc: &Document,
    k: usize,
    rng: &mut impl rand::Rng,
) -> Result<Explanation> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let n = doc.len();
    let ranked = rand::seq::index::sample(rng, n, k.min(n))
        .into_iter()
        .map(|index| RankedSentence { index, weight: 0.0 })
        .collect();
    Ok(Explanation {
        doc_id: doc.id.clone(),
        model: RANDOM_TAG.to_string(),
        k,
        ranked,
    })
}

/// How often two models pick the same explanation sentences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub k: usize,
    pub documents: usize,
    /// `shared_counts[j]` documents share exactly `j` sentences.
    pub shared_counts: Vec<usize>,
    pub shared_percent: Vec<f64>,
    pub top1_agreements: usize,
    pub top1_percent: f64,
}

impl OverlapReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8}{:>11}{:>10}", "shared", "documents", "percent");
        for (j, (c, p)) in self
            .shared_counts
            .iter()
            .zip(&self.shared_percent)
            .enumerate()
        {
            let _ = writeln!(out, "{j:<8}{c:>11}{:>9.2}%", p);
        }
        let _ = writeln!(
            out,
            "{:<8}{:>11}{:>9.2}%",
            "top-1", self.top1_agreements, self.top1_percent
        );
        let _ = writeln!(out, "{:<8}{:>11}", "total", self.documents);
        out
    }
}

/// Compares two aligned explanation lists document by document.
pub fn overlap_stats(a: &[Explanation], b: &[Explanation]) -> Result<OverlapReport> {
    if a.len() != b.len() {
        return Err(Error::Invalid(format!(
            "explanation lists differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Invalid("no explanations to compare".into()));
    }
    let k = a[0].k;
    let mut counts = vec![0; k + 1];
    let mut top1 = 0;
    for (x, y) in a.iter().zip(b) {
        if x.doc_id != y.doc_id {
            return Err(Error::Invalid(format!(
                "explanation lists are not aligned: `{}` vs `{}`",
                x.doc_id, y.doc_id
            )));
        }
        if x.k != k || y.k != k {
            return Err(Error::Invalid(format!("mixed k values at `{}`", x.doc_id)));
        }
        let xs: HashSet<usize> = x.indices().into_iter().collect();
        let shared = y.ranked.iter().filter(|r| xs.contains(&r.index)).count();
        counts[shared.min(k)] += 1;
        if x.top().is_some() && x.top() == y.top() {
            top1 += 1;
        }
    }
    let n = a.len();
    let pct = |c: usize| c as f64 * 100.0 / n as f64;
    Ok(OverlapReport {
        k,
        documents: n,
        shared_percent: counts.iter().map(|&c| pct(c)).collect(),
        shared_counts: counts,
        top1_agreements: top1,
        top1_percent: pct(top1),
    })
}

pub fn load_explanations(path: impl AsRef<Path>) -> Result<Vec<Explanation>> {
    jsonl::load_records(path)
}

pub fn save_explanations(expls: &[Explanation], path: impl AsRef<Path>) -> Result<()> {
    jsonl::save_records(expls, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use proptest::prelude::*;
    use rand::Rng;

    fn pred(weights: &[f64]) -> Prediction {
        Prediction {
            doc_id: "d".into(),
            label: Label::Pos,
            probabilities: [0.5, 0.5],
            sentence_weights: weights.to_vec(),
        }
    }

    fn expl(id: &str, idx: &[usize]) -> Explanation {
        Explanation {
            doc_id: id.into(),
            model: "m".into(),
            k: 3,
            ranked: idx
                .iter()
                .map(|&index| RankedSentence { index, weight: 0.0 })
                .collect(),
        }
    }

    fn doc_with(n: usize) -> Document {
        Document::new(
            "r",
            Label::Neg,
            (0..n).map(|i| (format!("sentence number {i}"), None)),
        )
        .unwrap()
    }

    /// Selection by repeated scan for the maximum, first index winning ties.
    fn selection_oracle(weights: &[f64], k: usize) -> Vec<usize> {
        let mut taken = vec![false; weights.len()];
        let mut out = Vec::new();
        for _ in 0..k.min(weights.len()) {
            let mut best: Option<usize> = None;
            for i in 0..weights.len() {
                if !taken[i] && best.is_none_or(|b| weights[i] > weights[b]) {
                    best = Some(i);
                }
            }
            taken[best.unwrap()] = true;
            out.push(best.unwrap());
        }
        out
    }

    #[test]
    fn ties_go_to_the_earlier_sentence() {
        let e = extract_top_k(&pred(&[0.1, 0.5, 0.2, 0.2]), 3, "at-cnn").unwrap();
        assert_eq!(e.indices(), vec![1, 2, 3]);
        assert_eq!(e.ranked[0].weight, 0.5);
        e.validate(4).unwrap();
    }

    #[test]
    fn short_documents_return_everything() {
        let e = extract_top_k(&pred(&[0.3, 0.7]), 3, "ra-cnn").unwrap();
        assert_eq!(e.indices(), vec![1, 0]);
        e.validate(2).unwrap();
        assert!(extract_top_k(&pred(&[0.3]), 0, "ra-cnn").is_err());
    }

    #[test]
    fn matches_selection_oracle_on_random_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let n = rng.gen_range(1..40);
            // Coarse values force plenty of ties.
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64 / 8.0).collect();
            let k = rng.gen_range(1..6);
            assert_eq!(
                top_k(&w, k).iter().map(|r| r.index).collect::<Vec<_>>(),
                selection_oracle(&w, k)
            );
        }
    }

    #[test]
    fn random_baseline_exhausts_small_documents_and_is_seeded() {
        let d = doc_with(3);
        let mut idx = random_explanation(&d, 3, 9).unwrap().indices();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2]);

        let d = doc_with(12);
        let a = random_explanation(&d, 3, 5).unwrap();
        assert_eq!(a, random_explanation(&d, 3, 5).unwrap());
        assert!(a.ranked.iter().all(|r| r.weight == 0.0));
        assert_eq!(a.model, RANDOM_TAG);
        let differs =
            (0..20).any(|s| random_explanation(&d, 3, s).unwrap().indices() != a.indices());
        assert!(differs);
    }

    #[test]
    fn random_baseline_frequencies_are_uniform() {
        let d = doc_with(10);
        let draws = 10_000;
        let mut hits = [0usize; 10];
        for seed in 0..draws {
            for i in random_explanation(&d, 3, seed).unwrap().indices() {
                hits[i] += 1;
            }
        }
        let p: f64 = 0.3;
        let mean = p * draws as f64;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (i, &h) in hits.iter().enumerate() {
            assert!(
                (h as f64 - mean).abs() <= 3.0 * sigma,
                "index {i}: {h} draws"
            );
        }
    }

    #[test]
    fn overlap_extremes() {
        let a: Vec<_> = (0..5).map(|i| expl(&format!("d{i}"), &[0, 1, 2])).collect();
        let r = overlap_stats(&a, &a).unwrap();
        assert_eq!(r.shared_counts, vec![0, 0, 0, 5]);
        assert_eq!(r.shared_percent, vec![0.0, 0.0, 0.0, 100.0]);
        assert_eq!(r.top1_percent, 100.0);

        let b: Vec<_> = (0..5).map(|i| expl(&format!("d{i}"), &[3, 4, 5])).collect();
        let r = overlap_stats(&a, &b).unwrap();
        assert_eq!(r.shared_counts, vec![5, 0, 0, 0]);
        assert_eq!(r.top1_agreements, 0);

        let c: Vec<_> = (0..5).map(|i| expl(&format!("x{i}"), &[0, 1, 2])).collect();
        assert!(overlap_stats(&a, &c).is_err());
        assert!(overlap_stats(&a, &a[..4]).is_err());
        assert!(overlap_stats(&[], &[]).is_err());
    }

    #[test]
    fn overlap_matches_set_intersection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for i in 0..50 {
            let n = rng.gen_range(3..12);
            let d = doc_with(n);
            let pick = |rng: &mut ChaCha8Rng| {
                let w: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
                Explanation {
                    doc_id: format!("d{i}"),
                    ..extract_top_k(&pred(&w), 3, "m").unwrap()
                }
            };
            xs.push(pick(&mut rng));
            ys.push(pick(&mut rng));
            xs.last().unwrap().validate(d.len()).unwrap();
        }
        let r = overlap_stats(&xs, &ys).unwrap();
        let mut counts = [0usize; 4];
        let mut top = 0;
        for (x, y) in xs.iter().zip(&ys) {
            let shared = x
                .indices()
                .iter()
                .filter(|i| y.indices().contains(i))
                .count();
            counts[shared] += 1;
            top += usize::from(x.indices()[0] == y.indices()[0]);
        }
        assert_eq!(r.shared_counts, counts.to_vec());
        assert_eq!(r.top1_agreements, top);
        assert!((r.shared_percent.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        assert_eq!(r.shared_counts.iter().sum::<usize>(), 50);
    }

    #[test]
    fn table_lists_every_bucket() {
        let a = vec![expl("d0", &[0, 1, 2]), expl("d1", &[0, 1, 2])];
        let b = vec![expl("d0", &[0, 5, 6]), expl("d1", &[2, 1, 0])];
        let t = overlap_stats(&a, &b).unwrap().to_table();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[2], "1                 1    50.00%");
        assert_eq!(lines[5], "top-1             1    50.00%");
        assert_eq!(lines[6], "total             2");
    }

    #[test]
    fn validate_rejects_broken_rankings() {
        assert!(expl("d", &[0, 0, 1]).validate(3).is_err());
        assert!(expl("d", &[0, 1, 7]).validate(3).is_err());
        assert!(expl("d", &[0, 1]).validate(5).is_err());
        let mut e = extract_top_k(&pred(&[0.2, 0.9, 0.4]), 3, "m").unwrap();
        e.ranked.swap(0, 1);
        assert!(e.validate(3).is_err());
    }

    #[test]
    fn jsonl_field_names() {
        let e = extract_top_k(&pred(&[0.25, 0.75]), 3, "ra-cnn").unwrap();
        let v: serde_json::Value = serde_json::to_value(&e).unwrap();
        assert_eq!(v["sentences"][0]["index"], 1);
        assert_eq!(v["k"], 3);
        assert_eq!(v["model"], "ra-cnn");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        save_explanations(std::slice::from_ref(&e), &p).unwrap();
        assert_eq!(load_explanations(&p).unwrap(), vec![e]);
    }

    proptest! {
        #[test]
        fn scaling_keeps_the_selection(w in prop::collection::vec(0.0f64..1.0, 1..30), c in 0.01f64..100.0, k in 1usize..6) {
            let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
            let a: Vec<usize> = top_k(&w, k).iter().map(|r| r.index).collect();
            let b: Vec<usize> = top_k(&scaled, k).iter().map(|r| r.index).collect();
            // Rounding can merge nearly equal weights; compare only when it does not.
            let merged = (0..w.len()).any(|i| (0..w.len()).any(|j| w[i] < w[j] && scaled[i] >= scaled[j]));
            prop_assume!(!merged);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn adding_a_weaker_sentence_keeps_the_selection(w in prop::collection::vec(0.0f64..1.0, 3..30), k in 1usize..4) {
            let before = top_k(&w, k);
            let kth = before.last().unwrap().weight;
            prop_assume!(kth > 0.0);
            let mut more = w.clone();
            more.push(kth / 2.0);
            prop_assert_eq!(top_k(&more, k), before);
        }

        #[test]
        fn overlap_is_symmetric(pairs in prop::collection::vec((prop::sample::subsequence((0..8usize).collect::<Vec<_>>(), 3), prop::sample::subsequence((0..8usize).collect::<Vec<_>>(), 3)), 1..20)) {
            let a: Vec<_> = pairs.iter().enumerate().map(|(i, (x, _))| expl(&format!("d{i}"), x)).collect();
            let b: Vec<_> = pairs.iter().enumerate().map(|(i, (_, y))| expl(&format!("d{i}"), y)).collect();
            prop_assert_eq!(overlap_stats(&a, &b).unwrap(), overlap_stats(&b, &a).unwrap());
        }

        #[test]
        fn random_baseline_never_repeats(n in 1usize..40, k in 1usize..6, seed: u64) {
            let d = doc_with(n);
            let e = random_explanation(&d, k, seed).unwrap();
            prop_assert_eq!(e.ranked.len(), k.min(n));
            let set: HashSet<usize> = e.indices().into_iter().collect();
            prop_assert_eq!(set.len(), e.ranked.len());
        }
    }
}
