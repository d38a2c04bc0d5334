//! Python module `ratattn`: corpora, model training and inference,
//! explanation extraction and judgment aggregation.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use ratattn_core::corpus::synth::{SyntheticCorpus, SyntheticSpec};
use ratattn_core::corpus::{build_vocab, make_split, Corpus as CoreCorpus, Document, Label, Split};
use ratattn_core::explain::{self, Explanation, RankedSentence};
use ratattn_core::harness::{self, Choice, Resolution, SourceTag};
use ratattn_core::models::{self, Architecture, ModelCheckpoint, ModelKind, TrainConfig};

fn err(e: ratattn_core::Error) -> PyErr {
    match e {
        ratattn_core::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_kind(kind: &str) -> PyResult<ModelKind> {
    kind.parse().map_err(err)
}

fn parse_choice(c: &str) -> PyResult<Choice> {
    match c {
        "A" => Ok(Choice::A),
        "B" => Ok(Choice::B),
        "EQUAL" => Ok(Choice::Equal),
        _ => Err(PyValueError::new_err(format!(
            "choice must be A, B or EQUAL, got `{c}`"
        ))),
    }
}

fn resolution_name(r: Resolution) -> &'static str {
    match r {
        Resolution::Resolved(Choice::A) => "A",
        Resolution::Resolved(Choice::B) => "B",
        Resolution::Resolved(Choice::Equal) => "EQUAL",
        Resolution::Pending => "pending",
        Resolution::NeedsFourth => "needs_fourth",
        Resolution::Unresolved => "unresolved",
    }
}

/// An unannotated document from raw sentences, for inference.
fn loose_document(sentences: Vec<String>) -> PyResult<Document> {
    Document::new(
        "input",
        Label::Pos,
        sentences.into_iter().map(|s| (s, None)),
    )
    .map_err(err)
}

#[pyclass(module = "ratattn", frozen)]
struct Corpus {
    inner: CoreCorpus,
}

#[pymethods]
impl Corpus {
    /// Reads a JSONL corpus: one `{id, label, sentences: [{text, rationale}]}` per line.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Corpus> {
        Ok(Corpus {
            inner: CoreCorpus::load(path).map_err(err)?,
        })
    }

    /// Review-shaped synthetic corpus; 90% of documents carry rationales.
    #[staticmethod]
    #[pyo3(signature = (documents, seed = 7))]
    fn synthetic(documents: usize, seed: u64) -> PyResult<Corpus> {
        let mut spec = SyntheticSpec::review_shaped(seed);
        spec.annotated = spec.annotated * documents / spec.documents.max(1);
        spec.documents = documents;
        Ok(Corpus {
            inner: CoreCorpus::new(SyntheticCorpus::generate(&spec).documents).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        ratattn_core::corpus::write_corpus(self.inner.documents(), path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn ids(&self) -> Vec<String> {
        self.inner
            .documents()
            .iter()
            .map(|d| d.id.clone())
            .collect()
    }

    /// `{id, label, sentences, rationales}`; `rationales` is None when unannotated.
    fn document<'py>(&self, py: Python<'py>, id: &str) -> PyResult<Bound<'py, PyDict>> {
        let d = self
            .inner
            .get(id)
            .ok_or_else(|| PyValueError::new_err(format!("no document `{id}`")))?;
        let out = PyDict::new(py);
        out.set_item("id", &d.id)?;
        out.set_item("label", d.label.as_str())?;
        out.set_item(
            "sentences",
            d.sentences
                .iter()
                .map(|s| s.text.as_str())
                .collect::<Vec<_>>(),
        )?;
        out.set_item("rationales", d.annotated.then(|| d.rationale_indices()))?;
        Ok(out)
    }

    /// Train/dev/test id lists: unannotated documents form the test set.
    #[pyo3(signature = (dev_fraction = 0.1, seed = 13))]
    fn split<'py>(
        &self,
        py: Python<'py>,
        dev_fraction: f64,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let s = make_split(self.inner.documents(), dev_fraction, seed).map_err(err)?;
        let out = PyDict::new(py);
        out.set_item("train", s.train)?;
        out.set_item("dev", s.dev)?;
        out.set_item("test", s.test)?;
        Ok(out)
    }
}

/// A trained Doc-CNN, AT-CNN or RA-CNN with its vocabulary.
#[pyclass(module = "ratattn", frozen)]
struct Model {
    inner: ModelCheckpoint,
}

#[pymethods]
impl Model {
    /// Trains one model on `corpus`, selecting the best dev epoch.
    #[staticmethod]
    #[pyo3(signature = (
        kind, corpus, *, seed = 1, epochs = 25, rationale_epochs = 5, rationale_weight = 1.0,
        learning_rate = 1e-3, dropout = 0.5, patience = 5, dev_fraction = 0.1, split_seed = 13,
        min_count = 2, embed_dim = 50, feature_maps = 50, widths = vec![3, 4, 5], attention_dim = 100,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        kind: &str,
        corpus: &Corpus,
        seed: u64,
        epochs: usize,
        rationale_epochs: usize,
        rationale_weight: f64,
        learning_rate: f64,
        dropout: f64,
        patience: usize,
        dev_fraction: f64,
        split_seed: u64,
        min_count: usize,
        embed_dim: usize,
        feature_maps: usize,
        widths: Vec<usize>,
        attention_dim: usize,
    ) -> PyResult<Model> {
        let config = TrainConfig {
            kind: parse_kind(kind)?,
            seed,
            epochs,
            rationale_epochs,
            rationale_weight,
            learning_rate,
            dropout,
            patience,
        };
        let arch = Architecture {
            embed_dim,
            feature_maps,
            widths,
            attention_dim,
            ..Architecture::default()
        };
        let corpus = &corpus.inner;
        let inner = py
            .detach(|| -> ratattn_core::Result<ModelCheckpoint> {
                let split: Split = make_split(corpus.documents(), dev_fraction, split_seed)?;
                let vocab = build_vocab(&corpus.resolve(&split.train)?, min_count)?;
                models::train(&config, &arch, corpus, &split, &vocab, None)
            })
            .map_err(err)?;
        Ok(Model { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Model> {
        Ok(Model {
            inner: ModelCheckpoint::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.as_str()
    }

    #[getter]
    fn best_epoch(&self) -> usize {
        self.inner.best_epoch
    }

    /// `(label, [p_neg, p_pos], sentence_weights)` for a list of sentences.
    fn predict(&self, sentences: Vec<String>) -> PyResult<(&'static str, [f64; 2], Vec<f64>)> {
        let p = self
            .inner
            .predict(&loose_document(sentences)?)
            .map_err(err)?;
        Ok((p.label.as_str(), p.probabilities, p.sentence_weights))
    }

    /// Indices of the `k` highest-weighted sentences, best first.
    #[pyo3(signature = (sentences, k = explain::DEFAULT_K))]
    fn explain(&self, sentences: Vec<String>, k: usize) -> PyResult<Vec<usize>> {
        let p = self
            .inner
            .predict(&loose_document(sentences)?)
            .map_err(err)?;
        let e = explain::extract_top_k(&p, k, self.inner.kind.as_str()).map_err(err)?;
        Ok(e.indices())
    }

    /// Accuracy over the given corpus documents, or over all of them.
    #[pyo3(signature = (corpus, ids = None))]
    fn accuracy(&self, corpus: &Corpus, ids: Option<Vec<String>>) -> PyResult<f64> {
        let docs: Vec<&Document> = match ids {
            Some(ids) => corpus.inner.resolve(&ids).map_err(err)?,
            None => corpus.inner.documents().iter().collect(),
        };
        Ok(models::evaluate_accuracy(&self.inner, &docs)
            .map_err(err)?
            .value())
    }
}

/// Indices of the `k` largest weights, best first; ties go to the earlier index.
#[pyfunction]
#[pyo3(signature = (weights, k = explain::DEFAULT_K))]
fn top_k(weights: Vec<f64>, k: usize) -> Vec<usize> {
    explain::top_k(&weights, k)
        .into_iter()
        .map(|r| r.index)
        .collect()
}

fn as_explanations(sets: Vec<Vec<usize>>, k: usize) -> Vec<Explanation> {
    sets.into_iter()
        .enumerate()
        .map(|(i, idx)| Explanation {
            doc_id: i.to_string(),
            model: String::new(),
            k,
            ranked: idx
                .into_iter()
                .map(|index| RankedSentence { index, weight: 0.0 })
                .collect(),
        })
        .collect()
}

/// Per-document overlap of two aligned lists of ranked sentence indices.
#[pyfunction]
#[pyo3(signature = (first, second, k = explain::DEFAULT_K))]
fn overlap<'py>(
    py: Python<'py>,
    first: Vec<Vec<usize>>,
    second: Vec<Vec<usize>>,
    k: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let r = explain::overlap_stats(&as_explanations(first, k), &as_explanations(second, k))
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("documents", r.documents)?;
    out.set_item("shared_counts", r.shared_counts)?;
    out.set_item("shared_percent", r.shared_percent)?;
    out.set_item("top1_agreements", r.top1_agreements)?;
    out.set_item("top1_percent", r.top1_percent)?;
    Ok(out)
}

/// Outcome of one hit from its trusted votes ("A", "B", "EQUAL"):
/// a winning choice, "pending", "needs_fourth" or "unresolved".
#[pyfunction]
fn resolve_votes(votes: Vec<String>) -> PyResult<&'static str> {
    let votes = votes
        .iter()
        .map(|v| parse_choice(v))
        .collect::<PyResult<Vec<_>>>()?;
    Ok(resolution_name(harness::resolve_votes(&votes)))
}

/// Percentage table for resolved outcomes, as printed by `aggregate`.
#[pyfunction]
#[pyo3(signature = (outcomes, first = "RA", second = "AT"))]
fn tabulate(outcomes: Vec<String>, first: &str, second: &str) -> PyResult<(f64, f64, f64, String)> {
    let votes = outcomes
        .iter()
        .map(|o| parse_choice(o).map(Resolution::Resolved))
        .collect::<PyResult<Vec<_>>>()?;
    let tag = |s: &str| s.parse::<SourceTag>().map_err(err);
    let t = harness::tabulate(&votes, tag(first)?, tag(second)?).map_err(err)?;
    Ok((t.first_better, t.second_better, t.equal, t.to_text()))
}

#[pymodule]
fn ratattn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Corpus>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(top_k, m)?)?;
    m.add_function(wrap_pyfunction!(overlap, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_votes, m)?)?;
    m.add_function(wrap_pyfunction!(tabulate, m)?)?;
    Ok(())
}
