//! Doc-CNN, AT-CNN and RA-CNN document classifiers.
//!
//! All three encode each sentence with a multi-width convolution followed
//! by max-over-time pooling and classify a document vector built from the
//! sentence vectors. They differ only in how sentence vectors are combined:
//!
//! * Doc-CNN sums them.
//! * AT-CNN weights them by attention against a learned context vector.
//! * RA-CNN weights them by a per-sentence rationale probability trained
//!   against human rationale labels.

mod checkpoint;
mod embeddings;
mod network;
mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{ModelCheckpoint, CHECKPOINT_HEADER};
pub use embeddings::PretrainedEmbeddings;
pub use network::{encode_document, EncodedDocument, Network, Objective};
pub use train::{grad_check, train, train_with_progress, EpochMetrics};

use crate::corpus::{Document, Label};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "doc-cnn")]
    DocCnn,
    #[serde(rename = "at-cnn")]
    AtCnn,
    #[serde(rename = "ra-cnn")]
    RaCnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::DocCnn, ModelKind::AtCnn, ModelKind::RaCnn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::DocCnn => "doc-cnn",
            ModelKind::AtCnn => "at-cnn",
            ModelKind::RaCnn => "ra-cnn",
        }
    }

    /// Display name used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::DocCnn => "Doc-CNN",
            ModelKind::AtCnn => "AT-CNN",
            ModelKind::RaCnn => "RA-CNN",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<ModelKind> {
        match s.to_ascii_lowercase().as_str() {
            "doc-cnn" | "doccnn" | "doc" => Ok(ModelKind::DocCnn),
            "at-cnn" | "atcnn" | "at" => Ok(ModelKind::AtCnn),
            "ra-cnn" | "racnn" | "ra" => Ok(ModelKind::RaCnn),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Network sizes shared by all three model kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub embed_dim: usize,
    pub attention_dim: usize,
    /// Convolution widths, in the order their feature maps are concatenated.
    pub widths: Vec<usize>,
    pub feature_maps: usize,
    pub max_sentence_len: usize,
    /// Parameters start uniform in `(-init_scale, init_scale)`.
    pub init_scale: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            embed_dim: 50,
            attention_dim: 100,
            widths: vec![3, 4, 5],
            feature_maps: 50,
            max_sentence_len: crate::corpus::MAX_SENTENCE_TOKENS,
            init_scale: 0.05,
        }
    }
}

impl Architecture {
    /// Length of a sentence vector.
    pub fn sentence_dim(&self) -> usize {
        self.widths.len() * self.feature_maps
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.attention_dim == 0 || self.feature_maps == 0 {
            return Err(Error::Config(
                "architecture dimensions must be positive".into(),
            ));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config(
                "convolution widths must be a non-empty set of positive integers".into(),
            ));
        }
        if self.max_sentence_len == 0 || !(self.init_scale > 0.0) {
            return Err(Error::Config(
                "max_sentence_len and init_scale must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ModelKind,
    /// Upper bound on joint-objective epochs.
    pub epochs: usize,
    /// RA-CNN only: epochs optimizing the rationale term alone before the
    /// joint objective starts.
    pub rationale_epochs: usize,
    /// Weight of the summed rationale cross-entropy in the RA-CNN loss.
    pub rationale_weight: f64,
    pub learning_rate: f64,
    /// Dropout on the document vector during training.
    pub dropout: f64,
    /// Stop after this many epochs without a dev-accuracy improvement.
    pub patience: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(kind: ModelKind) -> TrainConfig {
        TrainConfig {
            kind,
            epochs: 25,
            rationale_epochs: 5,
            rationale_weight: 1.0,
            learning_rate: 1e-3,
            dropout: 0.5,
            patience: 5,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(self.rationale_weight >= 0.0) {
            return Err(Error::Config(
                "rationale weight must be non-negative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Output of a trained model on one document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub doc_id: String,
    pub label: Label,
    /// Indexed by [`Label::index`].
    pub probabilities: [f64; 2],
    /// One weight per sentence: attention for AT-CNN, rationale
    /// probability for RA-CNN, `1/n` for Doc-CNN.
    pub sentence_weights: Vec<f64>,
}

/// Fraction of correctly classified documents, kept as an exact count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    pub fn value(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

impl std::fmt::Display for Accuracy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2}%", 100.0 * self.value())
    }
}

pub fn evaluate_accuracy(checkpoint: &ModelCheckpoint, docs: &[&Document]) -> Result<Accuracy> {
    if docs.is_empty() {
        return Err(Error::Invalid("accuracy over an empty document set".into()));
    }
    let mut correct = 0;
    for doc in docs {
        if checkpoint.predict(doc)?.label == doc.label {
            correct += 1;
        }
    }
    Ok(Accuracy {
        correct,
        total: docs.len(),
    })
}

/// Ids of the documents both models classify correctly, in input order.
pub fn both_correct_filter(
    first: &ModelCheckpoint,
    second: &ModelCheckpoint,
    docs: &[&Document],
) -> Result<Vec<String>> {
    let mut kept = Vec::new();
    for doc in docs {
        if first.predict(doc)?.label == doc.label && second.predict(doc)?.label == doc.label {
            kept.push(doc.id.clone());
        }
    }
    Ok(kept)
}
