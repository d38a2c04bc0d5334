//! The verbs of the `ratattn` command, as plain functions over a data
//! directory so that tests and the binary share one code path.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ratattn_core::corpus::synth::{SyntheticCorpus, SyntheticSpec};
use ratattn_core::corpus::{
    build_vocab, make_split, write_corpus, Corpus, Document, Split, Vocabulary,
};
use ratattn_core::explain::{
    extract_top_k, load_explanations, overlap_stats, random_explanations, save_explanations,
    Explanation, OverlapReport, RANDOM_TAG,
};
use ratattn_core::harness::{
    anonymize_ids, build_gold_hits, build_hits, load_hits, save_hits, summarize, ComparisonSummary,
    Hit, JudgmentLog, Study,
};
use ratattn_core::models::{
    both_correct_filter, evaluate_accuracy, train_with_progress, Accuracy, Architecture,
    ModelCheckpoint, ModelKind, PretrainedEmbeddings, TrainConfig,
};

use crate::manifest::{RunManifest, Seeds};

pub enum CorpusSource {
    File(PathBuf),
    /// Review-shaped synthetic corpus with this many documents.
    Synthetic {
        documents: usize,
        seed: u64,
    },
}

pub struct PrepareOptions {
    pub source: CorpusSource,
    pub min_count: usize,
    pub dev_fraction: f64,
    pub split_seed: u64,
    pub gold_holdout: usize,
    pub gold_seed: u64,
}

impl PrepareOptions {
    pub fn new(source: CorpusSource) -> PrepareOptions {
        PrepareOptions {
            source,
            min_count: 2,
            dev_fraction: 0.1,
            split_seed: 13,
            gold_holdout: 50,
            gold_seed: 13,
        }
    }
}

/// Loads or generates the corpus, builds the split and the vocabulary
/// over its training part, and writes a fresh manifest.
pub fn prepare(root: &Path, opts: &PrepareOptions) -> anyhow::Result<RunManifest> {
    fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
    let docs = match &opts.source {
        CorpusSource::File(p) => ratattn_core::corpus::load_corpus(p)
            .with_context(|| format!("loading corpus {}", p.display()))?,
        CorpusSource::Synthetic { documents, seed } => {
            let mut spec = SyntheticSpec::review_shaped(*seed);
            spec.annotated = spec.annotated * documents / spec.documents.max(1);
            spec.documents = *documents;
            SyntheticCorpus::generate(&spec).documents
        }
    };
    let mut split = make_split(&docs, opts.dev_fraction, opts.split_seed)?;
    split.carve_gold_holdout(opts.gold_holdout, opts.gold_seed)?;
    let corpus = Corpus::new(docs)?;
    let vocab = build_vocab(&corpus.resolve(&split.train)?, opts.min_count)?;

    write_corpus(corpus.documents(), root.join("corpus.jsonl"))?;
    vocab.save(root.join("vocab.tsv"))?;
    split.save(root.join("split.json"))?;
    let manifest = RunManifest {
        corpus: "corpus.jsonl".into(),
        vocab: "vocab.tsv".into(),
        split: "split.json".into(),
        min_count: opts.min_count,
        dev_fraction: opts.dev_fraction,
        checkpoints: BTreeMap::new(),
        explanations: BTreeMap::new(),
        hits: None,
        judgments: "judgments.jsonl".into(),
        seeds: Seeds {
            split: opts.split_seed,
            gold_holdout: opts.gold_seed,
            train: Vec::new(),
            random_baseline: None,
            hits: None,
        },
    };
    manifest.save(root)?;
    Ok(manifest)
}

/// Corpus, split and vocabulary of a prepared data directory.
pub struct Prepared {
    pub manifest: RunManifest,
    pub corpus: Corpus,
    pub split: Split,
    pub vocab: Vocabulary,
}

impl Prepared {
    pub fn load(root: &Path) -> anyhow::Result<Prepared> {
        let manifest = RunManifest::load(root)?;
        let corpus = Corpus::load(RunManifest::existing(root, &manifest.corpus)?)?;
        let split = Split::load(RunManifest::existing(root, &manifest.split)?)?;
        let vocab = Vocabulary::load(RunManifest::existing(root, &manifest.vocab)?)?;
        Ok(Prepared {
            manifest,
            corpus,
            split,
            vocab,
        })
    }

    pub fn test_docs(&self) -> anyhow::Result<Vec<&Document>> {
        Ok(self.corpus.resolve(&self.split.test)?)
    }

    pub fn checkpoint(&self, root: &Path, kind: ModelKind) -> anyhow::Result<ModelCheckpoint> {
        let path = self.manifest.checkpoint(root, kind.as_str())?;
        ModelCheckpoint::load(&path).with_context(|| format!("loading {}", path.display()))
    }
}

pub struct TrainOptions {
    pub kinds: Vec<ModelKind>,
    pub seeds: Vec<u64>,
    pub arch: Architecture,
    pub template: TrainConfig,
    pub embeddings: Option<PathBuf>,
}

pub struct SeedRun {
    pub kind: ModelKind,
    pub seed: u64,
    pub dev_accuracy: Option<f64>,
    pub best_epoch: usize,
    pub checkpoint: PathBuf,
}

/// Dev accuracy at the epoch a checkpoint was taken from.
pub fn selected_dev_accuracy(ckpt: &ModelCheckpoint) -> Option<f64> {
    ckpt.history
        .iter()
        .find(|m| m.epoch == ckpt.best_epoch)
        .and_then(|m| m.dev_acc)
}

/// Trains every requested model once per seed, writes checkpoints and
/// metrics, and records the seed with the best dev accuracy per model.
pub fn train(
    root: &Path,
    opts: &TrainOptions,
    mut progress: impl FnMut(ModelKind, u64, &ratattn_core::models::EpochMetrics),
) -> anyhow::Result<Vec<SeedRun>> {
    let mut prepared = Prepared::load(root)?;
    if opts.seeds.is_empty() {
        bail!("at least one seed is required");
    }
    let embeddings = match &opts.embeddings {
        Some(p) => Some(
            PretrainedEmbeddings::load(p).with_context(|| format!("loading {}", p.display()))?,
        ),
        None => None,
    };
    fs::create_dir_all(root.join("checkpoints"))?;
    fs::create_dir_all(root.join("metrics"))?;

    let mut runs = Vec::new();
    for &kind in &opts.kinds {
        let mut best: Option<(f64, usize)> = None;
        for &seed in &opts.seeds {
            let config = TrainConfig {
                kind,
                seed,
                ..opts.template.clone()
            };
            let ckpt = train_with_progress(
                &config,
                &opts.arch,
                &prepared.corpus,
                &prepared.split,
                &prepared.vocab,
                embeddings.as_ref(),
                |m| progress(kind, seed, m),
            )?;
            let name = format!("{}-seed{seed}", kind.as_str());
            let rel = format!("checkpoints/{name}.ckpt");
            ckpt.save(root.join(&rel))?;
            fs::write(
                root.join(format!("metrics/{name}.jsonl")),
                ckpt.history_jsonl()?,
            )?;
            let dev = selected_dev_accuracy(&ckpt);
            let score = dev.unwrap_or(f64::NEG_INFINITY);
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, runs.len()));
            }
            runs.push(SeedRun {
                kind,
                seed,
                dev_accuracy: dev,
                best_epoch: ckpt.best_epoch,
                checkpoint: root.join(&rel),
            });
        }
        let (_, i) = best.expect("seeds are non-empty");
        let rel = runs[i]
            .checkpoint
            .strip_prefix(root)
            .unwrap()
            .to_string_lossy()
            .into_owned();
        prepared
            .manifest
            .checkpoints
            .insert(kind.as_str().to_string(), rel);
    }
    prepared.manifest.seeds.train = opts.seeds.clone();
    prepared.manifest.save(root)?;
    Ok(runs)
}

/// Test accuracy of each selected checkpoint.
pub fn eval_acc(root: &Path, kinds: &[ModelKind]) -> anyhow::Result<Vec<(ModelKind, Accuracy)>> {
    let prepared = Prepared::load(root)?;
    let test = prepared.test_docs()?;
    let mut out = Vec::new();
    for &kind in kinds {
        let ckpt = prepared.checkpoint(root, kind)?;
        out.push((kind, evaluate_accuracy(&ckpt, &test)?));
    }
    Ok(out)
}

pub fn accuracy_table(rows: &[(ModelKind, Accuracy)]) -> String {
    let mut out = format!("{:<9}{:>10}\n", "Model", "Accuracy");
    for (kind, acc) in rows {
        out.push_str(&format!(
            "{:<9}{:>10}\n",
            kind.display_name(),
            acc.to_string()
        ));
    }
    out
}

/// Explanation sources accepted by `explain`, `overlap` and `gen-hits`.
pub fn parse_source(tag: &str) -> anyhow::Result<Option<ModelKind>> {
    if tag == RANDOM_TAG {
        return Ok(None);
    }
    match tag.parse::<ModelKind>() {
        Ok(k) => Ok(Some(k)),
        Err(_) => {
            bail!("unknown explanation source `{tag}` (expected doc-cnn, at-cnn, ra-cnn or random)")
        }
    }
}

/// Writes top-k explanations over the whole test set for each source.
pub fn explain(
    root: &Path,
    sources: &[String],
    k: usize,
    random_seed: u64,
) -> anyhow::Result<Vec<PathBuf>> {
    let mut prepared = Prepared::load(root)?;
    fs::create_dir_all(root.join("explanations"))?;
    let mut written = Vec::new();
    for tag in sources {
        let test = prepared.test_docs()?;
        let expls = match parse_source(tag)? {
            None => random_explanations(&test, k, random_seed)?,
            Some(kind) => {
                let ckpt = prepared.checkpoint(root, kind)?;
                test.iter()
                    .map(|d| extract_top_k(&ckpt.predict(d)?, k, kind.as_str()))
                    .collect::<Result<Vec<_>, _>>()?
            }
        };
        let rel = format!("explanations/{tag}.jsonl");
        save_explanations(&expls, root.join(&rel))?;
        prepared.manifest.explanations.insert(tag.clone(), rel);
        if parse_source(tag)?.is_none() {
            prepared.manifest.seeds.random_baseline = Some(random_seed);
        }
        written.push(root.join(format!("explanations/{tag}.jsonl")));
    }
    prepared.manifest.save(root)?;
    Ok(written)
}

fn explanations_for(
    root: &Path,
    manifest: &RunManifest,
    tag: &str,
) -> anyhow::Result<Vec<Explanation>> {
    let path = manifest.explanation(root, tag)?;
    load_explanations(&path).with_context(|| format!("loading {}", path.display()))
}

/// Test documents both RA-CNN and AT-CNN classify correctly.
pub fn both_correct_ids(root: &Path, prepared: &Prepared) -> anyhow::Result<Vec<String>> {
    let ra = prepared.checkpoint(root, ModelKind::RaCnn)?;
    let at = prepared.checkpoint(root, ModelKind::AtCnn)?;
    Ok(both_correct_filter(&ra, &at, &prepared.test_docs()?)?)
}

fn restrict(expls: Vec<Explanation>, ids: &[String]) -> anyhow::Result<Vec<Explanation>> {
    let by_id: HashMap<String, Explanation> =
        expls.into_iter().map(|e| (e.doc_id.clone(), e)).collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id)
                .cloned()
                .with_context(|| format!("no explanation for `{id}`"))
        })
        .collect()
}

/// Overlap between two sources' explanations over the test set, or over
/// the both-correct documents only.
pub fn overlap(
    root: &Path,
    first: &str,
    second: &str,
    both_correct_only: bool,
) -> anyhow::Result<OverlapReport> {
    let prepared = Prepared::load(root)?;
    let ids = if both_correct_only {
        both_correct_ids(root, &prepared)?
    } else {
        prepared.split.test.clone()
    };
    let a = restrict(explanations_for(root, &prepared.manifest, first)?, &ids)?;
    let b = restrict(explanations_for(root, &prepared.manifest, second)?, &ids)?;
    let report = overlap_stats(&a, &b)?;
    fs::create_dir_all(root.join("results"))?;
    fs::write(
        root.join(format!("results/overlap-{first}-{second}.json")),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    Ok(report)
}

pub struct GenHitsOptions {
    /// (first, second) explanation sources per comparison.
    pub pairs: Vec<(String, String)>,
    pub seed: u64,
    pub gold_count: usize,
    /// Use every test document instead of the both-correct ones.
    pub include_misclassified: bool,
}

pub struct GeneratedHits {
    pub documents: usize,
    pub per_comparison: Vec<(String, String, usize)>,
    pub gold: usize,
    pub hits: Vec<Hit>,
}

/// Builds gold questions from the holdout plus one hit per study document
/// and comparison, and starts a fresh judgment log.
pub fn gen_hits(root: &Path, opts: &GenHitsOptions) -> anyhow::Result<GeneratedHits> {
    let mut prepared = Prepared::load(root)?;
    let ids = if opts.include_misclassified {
        prepared.split.test.clone()
    } else {
        both_correct_ids(root, &prepared)?
    };
    let docs = prepared.corpus.resolve(&ids)?;
    let holdout = prepared.corpus.resolve(&prepared.split.gold_holdout)?;
    let mut hits = build_gold_hits(&holdout, opts.seed, opts.gold_count)?;
    let gold = hits.len();
    let mut per_comparison = Vec::new();
    for (i, (first, second)) in opts.pairs.iter().enumerate() {
        let a = explanations_for(root, &prepared.manifest, first)?;
        let b = explanations_for(root, &prepared.manifest, second)?;
        let built = build_hits(&docs, &a, &b, opts.seed.wrapping_add(i as u64 + 1))?;
        per_comparison.push((first.clone(), second.clone(), built.len()));
        hits.extend(built);
    }
    anonymize_ids(&mut hits, opts.seed);
    save_hits(&hits, root.join("hits.jsonl"))?;
    let log = root.join(&prepared.manifest.judgments);
    if log.exists() {
        fs::remove_file(&log).with_context(|| format!("clearing {}", log.display()))?;
    }
    prepared.manifest.hits = Some("hits.jsonl".into());
    prepared.manifest.seeds.hits = Some(opts.seed);
    prepared.manifest.save(root)?;
    Ok(GeneratedHits {
        documents: docs.len(),
        per_comparison,
        gold,
        hits,
    })
}

pub fn hits_path(root: &Path, manifest: &RunManifest) -> anyhow::Result<PathBuf> {
    match &manifest.hits {
        Some(rel) => RunManifest::existing(root, rel),
        None => bail!("no hits in the manifest (run `gen-hits` first)"),
    }
}

/// Replays a judgment log against the hits and tabulates every comparison.
pub fn aggregate(root: &Path, log: Option<&Path>) -> anyhow::Result<Vec<ComparisonSummary>> {
    let manifest = RunManifest::load(root)?;
    let hits = load_hits(hits_path(root, &manifest)?)?;
    let log_path = match log {
        Some(p) => p.to_path_buf(),
        None => root.join(&manifest.judgments),
    };
    let entries = if log_path.exists() {
        JudgmentLog::open(&log_path)?.1
    } else {
        Vec::new()
    };
    let study = Study::replay(hits, entries)?;
    let summary = summarize(&study);
    fs::create_dir_all(root.join("results"))?;
    fs::write(
        root.join("results/results.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(summary)
}

pub fn summary_text(summary: &[ComparisonSummary]) -> String {
    let mut out = String::new();
    for s in summary {
        out.push_str(&format!(
            "{} vs {}: {} hits, {} open, {} unresolved\n",
            s.first.display_name(),
            s.second.display_name(),
            s.hits,
            s.open,
            s.unresolved
        ));
        match &s.table {
            Some(t) => out.push_str(&t.to_text()),
            None => out.push_str("no resolved hits yet\n"),
        }
        out.push('\n');
    }
    out
}
